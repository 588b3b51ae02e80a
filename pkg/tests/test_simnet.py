import numpy as np
import pytest

from conftest import rel_err, sequential_sum
from sparsecomm import costmodel as cm
from sparsecomm import simnet
from sparsecomm.core import LinkParams, ShapeError, SparseChunk, Topology
from sparsecomm.simnet import WorkerGroup

LINK = LinkParams.public_cloud()


def group(m, n, vectors, link=LINK):
    return WorkerGroup.from_vectors(Topology(m, n, link), vectors)


def test_reduce_scatter_two_ranks():
    res = simnet.reduce_scatter_intra(group(1, 2, [[1, 2, 3, 4], [10, 20, 30, 40]]), 0)
    np.testing.assert_array_equal(res.outputs[0], [11, 22])
    np.testing.assert_array_equal(res.outputs[1], [33, 44])
    assert res.modeled_time == cm.ring_reduce_scatter_time(2, 4, LINK.alpha_intra, LINK.beta_intra, 4)


def test_reduce_scatter_single_rank_is_identity():
    res = simnet.reduce_scatter_intra(group(1, 1, [[1.5, 2.5]]), 0)
    np.testing.assert_array_equal(res.outputs[0], [1.5, 2.5])
    assert res.modeled_time == 0.0


def test_reduce_scatter_matches_sum_then_slice(rng):
    vecs = [rng.standard_normal(64) for _ in range(4)]
    res = simnet.reduce_scatter_intra(group(1, 4, vecs), 0)
    total = sequential_sum(vecs)
    for j in range(4):
        np.testing.assert_array_equal(res.outputs[j], total[16 * j: 16 * (j + 1)])


def test_reduce_scatter_pads_indivisible_lengths():
    res = simnet.reduce_scatter_intra(group(1, 3, [[1, 1, 1, 1]] * 3), 0)
    assert [o.tolist() for o in res.ordered()] == [[3, 3], [3, 3], [0, 0]]


def test_reduce_scatter_shape_error():
    with pytest.raises(ShapeError):
        simnet.reduce_scatter_intra(group(1, 2, [[1, 2], [1, 2, 3]]), 0)


def test_all_gather_intra():
    res = simnet.all_gather_intra(group(1, 2, [[1, 2], [3, 4]]), 0)
    for out in res.ordered():
        np.testing.assert_array_equal(out, [1, 2, 3, 4])
    assert simnet.all_gather_intra(group(1, 1, [[7.0]]), 0).ordered()[0].tolist() == [7.0]
    with pytest.raises(ShapeError):
        simnet.all_gather_intra(group(1, 2, [[1, 2], [3]]), 0)


def test_all_gather_intra_concatenation_oracle(rng):
    segs = [rng.standard_normal(5) for _ in range(8)]
    res = simnet.all_gather_intra(group(1, 8, segs), 0)
    for out in res.ordered():
        np.testing.assert_array_equal(out, np.concatenate(segs))
    assert res.modeled_time == cm.allgather_time(8, 5, LINK.alpha_intra, LINK.beta_intra, 4)
    billed = simnet.all_gather_intra(group(1, 8, segs), 0, billed_elements=2)
    assert billed.modeled_time == cm.allgather_time(8, 2, LINK.alpha_intra, LINK.beta_intra, 4)


def test_all_gather_inter_two_nodes():
    topo = Topology(2, 1, LINK)
    a, b = SparseChunk([5.0], [1], 4), SparseChunk([7.0], [3], 4)
    res = simnet.all_gather_inter(WorkerGroup(topo, [a, b]), 0)
    assert res.outputs[0] == res.outputs[1] == (a, b)
    assert res.modeled_time == cm.sparse_allgather_time(2, 1, LINK.alpha_inter, LINK.beta_inter, LINK)


def test_all_gather_inter_identity_and_errors(rng):
    topo = Topology(1, 1)
    c = SparseChunk([1.0], [0], 2)
    res = simnet.all_gather_inter(WorkerGroup(topo, [c]), 0)
    assert res.outputs[0] == (c,) and res.modeled_time == 0.0
    topo = Topology(2, 1)
    with pytest.raises(ShapeError):
        simnet.all_gather_inter(WorkerGroup(topo, [c, SparseChunk([1.0, 2.0], [0, 1], 2)]), 0)
    with pytest.raises(ShapeError):
        simnet.all_gather_inter(WorkerGroup(topo, [np.zeros(2), np.zeros(2)]), 0)


def test_all_gather_inter_concatenation_oracle(rng):
    topo = Topology(4, 2, LINK)
    chunks = [SparseChunk(rng.standard_normal(3), rng.choice(10, 3, replace=False), 10) for _ in range(8)]
    res = simnet.all_gather_inter(WorkerGroup(topo, chunks), 1)
    expected = tuple(chunks[w] for w in topo.rank_workers(1))
    for w in topo.rank_workers(1):
        assert res.outputs[w] == expected
    assert set(res.outputs) == set(topo.rank_workers(1))


def test_all_reduce_ring():
    res = simnet.all_reduce_ring(group(1, 2, [[1, 1], [2, 2]]))
    assert [o.tolist() for o in res.ordered()] == [[3, 3], [3, 3]]
    solo = simnet.all_reduce_ring(group(1, 1, [[4.0, 5.0]]))
    assert solo.ordered()[0].tolist() == [4.0, 5.0] and solo.modeled_time == 0.0


def test_all_reduce_ring_bitwise_sequential(rng):
    vecs = [rng.standard_normal(100) for _ in range(32)]
    res = simnet.all_reduce_ring(group(4, 8, vecs))
    for out in res.ordered():
        np.testing.assert_array_equal(out, sequential_sum(vecs))
    assert res.modeled_time == cm.ring_allreduce_cost(32, 100, LINK)


def test_all_reduce_2dtorus():
    res = simnet.all_reduce_2dtorus(group(2, 2, [np.ones(4)] * 4))
    for out in res.ordered():
        np.testing.assert_array_equal(out, [4, 4, 4, 4])


def test_all_reduce_2dtorus_single_node_is_rs_plus_ag(rng):
    vecs = [rng.standard_normal(12) for _ in range(3)]
    g = group(1, 3, vecs)
    res = simnet.all_reduce_2dtorus(g)
    rs = simnet.reduce_scatter_intra(g, 0)
    ag = simnet.all_gather_intra(WorkerGroup(g.topology, rs.ordered()), 0)
    np.testing.assert_array_equal(res.ordered()[0], ag.ordered()[0])
    assert res.modeled_time == pytest.approx(rs.modeled_time + ag.modeled_time, rel=1e-12)


def test_all_reduce_2dtorus_matches_sequential(rng):
    vecs = [rng.standard_normal(64) for _ in range(16)]
    res = simnet.all_reduce_2dtorus(group(4, 4, vecs))
    outs = res.ordered()
    assert rel_err(outs[0], sequential_sum(vecs)) < 1e-12
    assert all(np.array_equal(outs[0], o) for o in outs)
    assert res.modeled_time == pytest.approx(sum(cm.torus2d_cost(4, 4, 64, LINK)), rel=1e-12)


def test_all_reduce_2dtorus_indivisible_length(rng):
    vecs = [rng.standard_normal(13) for _ in range(6)]
    out = simnet.all_reduce_2dtorus(group(2, 3, vecs)).ordered()[0]
    assert out.size == 13 and rel_err(out, sequential_sum(vecs)) < 1e-12


@pytest.mark.parametrize("op", ["ring", "torus", "rs"])
def test_conservation_all_ones(op):
    g = group(3, 4, [np.ones(24)] * 12)
    if op == "ring":
        outs, expect = simnet.all_reduce_ring(g).ordered(), 12
    elif op == "torus":
        outs, expect = simnet.all_reduce_2dtorus(g).ordered(), 12
    else:
        outs, expect = simnet.reduce_scatter_intra(g, 1).ordered(), 4
    for out in outs:
        assert np.all(out == expect)


def test_determinism_and_monotone_time(rng):
    vecs = [rng.standard_normal(40) for _ in range(4)]
    for fn in (simnet.all_reduce_ring, simnet.all_reduce_2dtorus):
        a, b = fn(group(2, 2, vecs)), fn(group(2, 2, vecs))
        assert a.modeled_time == b.modeled_time
        assert all(np.array_equal(x, y) for x, y in zip(a.ordered(), b.ordered()))
        longer = fn(group(2, 2, [np.concatenate([v, v]) for v in vecs]))
        assert longer.modeled_time >= a.modeled_time
        slow = LinkParams(*(2 * getattr(LINK, f) for f in ("alpha_intra", "beta_intra", "alpha_inter", "beta_inter")))
        assert fn(group(2, 2, vecs, slow)).modeled_time >= a.modeled_time


def test_map_workers_threaded_preserves_order():
    assert simnet.map_workers(lambda x: x * x, list(range(20)), max_workers=4) == [x * x for x in range(20)]
