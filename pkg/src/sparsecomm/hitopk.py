"""Sparse gradient aggregation: hierarchical top-k (HiTopKComm) and the flat NaiveAG baseline.

Hierarchical aggregation runs four steps on an ``m x n`` cluster:

1. intra-node reduce-scatter, rank ``j`` keeps segment ``j`` of its node's sum;
2. every rank selects ``k_seg`` entries of its segment with MSTopK;
3. rank ``j`` of every node all-gathers the ``m`` selections and scatter-adds them
   into a zeroed segment buffer (duplicate indices are summed);
4. intra-node all-gather of the segment buffers.

Selection indices are segment-local throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import costmodel, simnet
from .core import ConfigurationError, Density, SparseChunk, k_from_density
from .simnet import CollectiveResult, WorkerGroup
from .topk import MSTopKParams, mstopk

ALGORITHMS = ("hitopk", "naive_ag", "dense_ring", "dense_2dtorus")
_ALIASES = {"ring": "dense_ring", "2dtorus": "dense_2dtorus", "torus": "dense_2dtorus", "naive": "naive_ag"}


@dataclass(frozen=True)
class AggregationConfig:
    density: Density = field(default_factory=lambda: Density(0.01))
    mstopk_params: MSTopKParams = field(default_factory=MSTopKParams)
    algorithm: str = "hitopk"
    select_seconds_per_element: float = costmodel.DEFAULT_SELECT_SECONDS_PER_ELEMENT
    index_traffic: bool = True
    max_workers: int | None = None

    def __post_init__(self):
        if not isinstance(self.density, Density):
            object.__setattr__(self, "density", Density(self.density))
        algo = _ALIASES.get(self.algorithm, self.algorithm)
        if algo not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        object.__setattr__(self, "algorithm", algo)

    @property
    def sparse(self) -> bool:
        return self.algorithm in ("hitopk", "naive_ag")


def _accumulate(chunks, length: int) -> np.ndarray:
    buf = np.zeros(length)
    for c in chunks:
        buf[c.indices] += c.values
    return buf


def hitopkcomm(group: WorkerGroup, config: AggregationConfig) -> CollectiveResult:
    """Hierarchical top-k aggregation of every worker's dense gradient.

    ``details`` carries, per worker, the reduce-scattered segment that was
    sparsified (``accumulated``, embedded in a length-``d`` vector) and the
    entries it transmitted (``selected``, global indices); error-feedback
    callers derive residuals from them.
    """
    topo = group.topology
    m, n = topo.m, topo.n
    d = simnet._dense_same_length(group.buffers)
    if d < m * n:
        raise ConfigurationError(f"d={d} is smaller than the worker count {m * n}")
    seg = costmodel.segment_length(d, n)
    k_seg = k_from_density(seg, config.density)

    # step 1
    scattered: dict = {}
    t1 = 0.0
    moved = 0
    for node in range(m):
        res = simnet.reduce_scatter_intra(group, node)
        scattered.update(res.outputs)
        t1 = max(t1, res.modeled_time)
        moved += res.bytes_moved

    # step 2
    def select(w):
        return mstopk(scattered[w], k_seg, config.mstopk_params, stream=w)

    chunks = simnet.map_workers(select, list(topo.workers()), config.max_workers)
    t2 = config.select_seconds_per_element * d / n

    # step 3
    gathered: dict = {}
    t3 = 0.0
    chunk_group = WorkerGroup(topo, chunks)
    for rank in range(n):
        res = simnet.all_gather_inter(chunk_group, rank, index_traffic=config.index_traffic)
        gathered.update(res.outputs)
        t3 = max(t3, res.modeled_time)
        moved += res.bytes_moved
    segments = [_accumulate(gathered[w], seg) for w in topo.workers()]

    # step 4
    outputs: dict = {}
    t4 = 0.0
    seg_group = WorkerGroup(topo, segments)
    for node in range(m):
        res = simnet.all_gather_intra(seg_group, node, total_length=d, billed_elements=m * k_seg)
        outputs.update(res.outputs)
        t4 = max(t4, res.modeled_time)
        moved += res.bytes_moved

    breakdown = costmodel.CostBreakdown(t1, t2, t3, t4)
    details = {"selected": {}, "accumulated": {}, "k_seg": k_seg}
    for w in topo.workers():
        _, rank = topo.to_pair(w)
        offset = rank * seg
        acc = np.zeros(d)
        stop = min(offset + seg, d)
        acc[offset:stop] = scattered[w][: stop - offset]
        c = chunks[w]
        keep = offset + c.indices < d
        details["accumulated"][w] = acc
        details["selected"][w] = SparseChunk(c.values[keep], offset + c.indices[keep], d)
    return CollectiveResult(outputs, breakdown.total, moved, breakdown.as_dict(), details)


def naive_ag(group: WorkerGroup, config: AggregationConfig) -> CollectiveResult:
    """Every worker selects top-k of its full gradient; a flat P-way all-gather
    of values and indices follows, then local accumulation in worker order."""
    topo = group.topology
    P, p = topo.P, topo.link_params
    d = simnet._dense_same_length(group.buffers)
    k = k_from_density(d, config.density)
    vectors = [np.asarray(b, dtype=np.float64) for b in group.buffers]

    def select(w):
        return mstopk(vectors[w], k, config.mstopk_params, stream=w)

    chunks = simnet.map_workers(select, list(topo.workers()), config.max_workers)
    total = _accumulate(chunks, d)
    outputs = {w: total.copy() for w in topo.workers()}
    if config.index_traffic:
        t = costmodel.naiveag_cost(P, d, config.density, p)
        width = p.bytes_per_element + p.index_bytes
    else:
        t = costmodel.allgather_cost(P, k, p)
        width = p.bytes_per_element
    details = {
        "selected": dict(enumerate(chunks)),
        "accumulated": dict(enumerate(vectors)),
        "k": k,
    }
    return CollectiveResult(outputs, t, P * (P - 1) * k * width, {"all_gather": t}, details)


def aggregate(group: WorkerGroup, config: AggregationConfig) -> CollectiveResult:
    """Run the aggregation named by ``config.algorithm``."""
    if config.algorithm == "hitopk":
        return hitopkcomm(group, config)
    if config.algorithm == "naive_ag":
        return naive_ag(group, config)
    if config.algorithm == "dense_ring":
        return simnet.all_reduce_ring(group)
    return simnet.all_reduce_2dtorus(group)
