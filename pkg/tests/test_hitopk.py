import numpy as np
import pytest

from conftest import rel_err, sequential_sum
from sparsecomm import costmodel as cm
from sparsecomm import simnet
from sparsecomm.core import ConfigurationError, LinkParams, Topology
from sparsecomm.hitopk import AggregationConfig, aggregate, hitopkcomm, naive_ag
from sparsecomm.simnet import WorkerGroup
from sparsecomm.topk import MSTopKParams, exact_topk, mstopk

LINK = LinkParams.public_cloud()


def make_group(m, n, d, seed=0, link=LINK):
    rng = np.random.default_rng(seed)
    return WorkerGroup.from_vectors(Topology(m, n, link), [rng.standard_normal(d) for _ in range(m * n)])


def test_hand_executed_example():
    g = WorkerGroup.from_vectors(Topology(2, 1, LINK), [[10, 0, 0, 1], [0, 10, 1, 0]])
    cfg = AggregationConfig(density=0.5)
    for res in (hitopkcomm(g, cfg), naive_ag(g, cfg)):
        for out in res.ordered():
            assert out.tolist() == [10.0, 10.0, 1.0, 1.0]


def test_density_one_equals_dense_sum():
    g = make_group(2, 2, 64)
    ring = simnet.all_reduce_ring(g).ordered()[0]
    res = hitopkcomm(g, AggregationConfig(density=1.0))
    for out in res.ordered():
        assert rel_err(out, ring) < 1e-12
    again = hitopkcomm(g, AggregationConfig(density=1.0))
    assert all(np.array_equal(a, b) for a, b in zip(res.ordered(), again.ordered()))


def test_density_one_hitopk_bitwise_equals_2dtorus():
    g = make_group(4, 2, 96, seed=3)
    torus = simnet.all_reduce_2dtorus(g).ordered()[0]
    np.testing.assert_array_equal(hitopkcomm(g, AggregationConfig(density=1.0)).ordered()[0], torus)


def test_density_one_naive_bitwise_equals_ring():
    g = make_group(2, 3, 50, seed=4)
    ring = simnet.all_reduce_ring(g).ordered()[0]
    np.testing.assert_array_equal(naive_ag(g, AggregationConfig(density=1.0)).ordered()[0], ring)


def test_single_worker_is_topk_filter():
    x = np.random.default_rng(1).standard_normal(200)
    g = WorkerGroup.from_vectors(Topology(1, 1), [x])
    cfg = AggregationConfig(density=0.05, mstopk_params=MSTopKParams(30, 9))
    chunk = mstopk(x, 10, cfg.mstopk_params, stream=0)
    for algo in (hitopkcomm, naive_ag):
        out = algo(g, cfg).ordered()[0]
        np.testing.assert_array_equal(out, chunk.to_dense())
        assert np.count_nonzero(out) == 10
    # on continuous data the approximate filter equals the exact one
    np.testing.assert_array_equal(np.flatnonzero(chunk.to_dense()), exact_topk(x, 10).indices)


def test_small_d_rejected():
    with pytest.raises(ConfigurationError):
        hitopkcomm(make_group(2, 4, 7), AggregationConfig())


@pytest.mark.parametrize("m, n, d", [(2, 2, 1000), (4, 2, 999), (3, 4, 4096)])
def test_sparsity_agreement_and_containment(m, n, d):
    g = make_group(m, n, d, seed=m * n)
    cfg = AggregationConfig(density=0.02)
    res = hitopkcomm(g, cfg)
    outs = res.ordered()
    assert all(np.array_equal(outs[0], o) for o in outs)
    k_seg = res.details["k_seg"]
    assert np.count_nonzero(outs[0]) <= m * n * k_seg
    picked = set()
    for chunk in res.details["selected"].values():
        picked |= set(chunk.indices.tolist())
    assert set(np.flatnonzero(outs[0]).tolist()) <= picked


def test_sum_of_selected_values_is_output():
    g = make_group(2, 4, 400, seed=11)
    res = hitopkcomm(g, AggregationConfig(density=0.05))
    # segments are disjoint, so summing every selected chunk reproduces the output
    acc = np.zeros(400)
    for w in sorted(res.details["selected"]):
        chunk = res.details["selected"][w]
        acc[chunk.indices] += chunk.values
    np.testing.assert_allclose(res.ordered()[0], acc, rtol=0, atol=1e-12)


@pytest.mark.parametrize("m, n, d, rho", [(1, 1, 10, 0.5), (2, 2, 64, 0.1), (4, 8, 1000, 0.01), (3, 5, 777, 0.2)])
@pytest.mark.parametrize("index_traffic", [True, False])
def test_modeled_time_matches_costmodel(m, n, d, rho, index_traffic):
    g = make_group(m, n, d)
    cfg = AggregationConfig(density=rho, select_seconds_per_element=3e-10, index_traffic=index_traffic)
    res = hitopkcomm(g, cfg)
    bd = cm.hitopk_cost(m, n, d, rho, LINK, 3e-10, index_traffic=index_traffic)
    for t in ("t1", "t2", "t3", "t4"):
        assert res.breakdown[t] == pytest.approx(getattr(bd, t), rel=1e-12, abs=0)
    assert res.modeled_time == pytest.approx(bd.total, rel=1e-12)
    naive = naive_ag(g, cfg)
    expect = cm.naiveag_cost(m * n, d, rho, LINK) if index_traffic else cm.allgather_cost(
        m * n, cm.k_from_density(d, rho), LINK)
    assert naive.modeled_time == pytest.approx(expect, rel=1e-12)


def test_aggregate_dispatch_and_aliases():
    g = make_group(2, 2, 32)
    assert AggregationConfig(algorithm="ring").algorithm == "dense_ring"
    with pytest.raises(ValueError):
        AggregationConfig(algorithm="allreduce")
    ref = sequential_sum(g.buffers)
    for algo in ("dense_ring", "dense_2dtorus"):
        assert rel_err(aggregate(g, AggregationConfig(algorithm=algo)).ordered()[0], ref) < 1e-12


def test_threaded_selection_is_deterministic():
    g = make_group(2, 4, 800)
    a = hitopkcomm(g, AggregationConfig(density=0.05))
    b = hitopkcomm(g, AggregationConfig(density=0.05, max_workers=4))
    np.testing.assert_array_equal(a.ordered()[0], b.ordered()[0])
