"""Deterministic in-process simulation of an ``m x n`` cluster.

Collectives are computed functionally: each call reads every participant's
buffer, produces every participant's output and reports the time the
alpha-beta model assigns to it. A call is a barrier. Reductions always start
from a zero buffer and add contributions in ascending rank (then node) order,
so outputs are bitwise reproducible and identical on every participant.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence, TypeVar

import numpy as np

from . import costmodel
from .core import ShapeError, SparseChunk, Topology, as_array

T = TypeVar("T")


@dataclass
class WorkerGroup:
    """Per-worker buffers of one collective call, indexed by worker id."""

    topology: Topology
    buffers: list

    def __post_init__(self):
        if len(self.buffers) != self.topology.P:
            raise ShapeError(f"expected {self.topology.P} buffers, got {len(self.buffers)}")

    @classmethod
    def from_vectors(cls, topology: Topology, vectors: Sequence) -> "WorkerGroup":
        return cls(topology, [np.array(as_array(v)) for v in vectors])

    def node_buffers(self, node: int) -> list:
        return [self.buffers[w] for w in self.topology.node_workers(node)]

    def rank_buffers(self, rank: int) -> list:
        return [self.buffers[w] for w in self.topology.rank_workers(rank)]


@dataclass
class CollectiveResult:
    """Outputs keyed by worker id plus the modeled elapsed time in seconds."""

    outputs: dict
    modeled_time: float
    bytes_moved: int = 0
    breakdown: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def ordered(self) -> list:
        return [self.outputs[w] for w in sorted(self.outputs)]


def map_workers(fn: Callable[..., T], items: Sequence, max_workers: int | None = None) -> list[T]:
    """Apply ``fn`` to each item, optionally on a thread pool; results keep input order."""
    if not max_workers or max_workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(fn, items))


def _dense_same_length(buffers: Sequence) -> int:
    lengths = {np.asarray(b).shape for b in buffers}
    if len(lengths) != 1:
        raise ShapeError(f"participants hold buffers of different shapes: {sorted(lengths)}")
    (shape,) = lengths
    if len(shape) != 1:
        raise ShapeError("dense buffers must be 1-D")
    return shape[0]


def ordered_sum(buffers: Sequence[np.ndarray], length: int | None = None) -> np.ndarray:
    """Zero-initialised sum, contributions added in the given order."""
    length = len(buffers[0]) if length is None else length
    acc = np.zeros(length)
    for b in buffers:
        acc[: len(b)] += b
    return acc


def _padded(vec: np.ndarray, n: int) -> np.ndarray:
    seg = costmodel.segment_length(vec.size, n)
    if seg * n == vec.size:
        return vec
    out = np.zeros(seg * n)
    out[: vec.size] = vec
    return out


def reduce_scatter_intra(group: WorkerGroup, node: int) -> CollectiveResult:
    """Rank ``j`` of ``node`` ends with segment ``j`` of the node's elementwise sum.

    Vectors whose length is not a multiple of ``n`` are zero-padded for
    segmentation, so the last segments may carry trailing zeros.
    """
    topo = group.topology
    n, p = topo.n, topo.link_params
    bufs = group.node_buffers(node)
    d = _dense_same_length(bufs)
    seg = costmodel.segment_length(d, n)
    total = ordered_sum([_padded(np.asarray(b, dtype=np.float64), n) for b in bufs], seg * n)
    outputs = {w: total[j * seg : (j + 1) * seg].copy() for j, w in enumerate(topo.node_workers(node))}
    t = costmodel.ring_reduce_scatter_time(n, d, p.alpha_intra, p.beta_intra, p.bytes_per_element)
    return CollectiveResult(outputs, t, n * (n - 1) * seg * p.bytes_per_element)


def all_gather_intra(
    group: WorkerGroup,
    node: int,
    *,
    total_length: int | None = None,
    billed_elements: float | None = None,
) -> CollectiveResult:
    """Every rank of ``node`` ends with the rank-ordered concatenation of the segments.

    ``total_length`` strips segmentation padding. ``billed_elements`` overrides the
    per-rank element count used for the modeled time (defaults to the segment
    length).
    """
    topo = group.topology
    n, p = topo.n, topo.link_params
    bufs = group.node_buffers(node)
    seg = _dense_same_length(bufs)
    full = np.concatenate([np.asarray(b, dtype=np.float64) for b in bufs])
    if total_length is not None:
        if total_length > full.size:
            raise ShapeError("total_length exceeds gathered length")
        full = full[:total_length]
    outputs = {w: full.copy() for w in topo.node_workers(node)}
    billed = seg if billed_elements is None else billed_elements
    t = costmodel.allgather_time(n, billed, p.alpha_intra, p.beta_intra, p.bytes_per_element)
    return CollectiveResult(outputs, t, n * (n - 1) * seg * p.bytes_per_element)


def all_gather_inter(group: WorkerGroup, rank: int, *, index_traffic: bool = True) -> CollectiveResult:
    """Rank ``rank`` of every node ends with all ``m`` sparse chunks, node-ordered.

    Values and indices travel as two all-gathers; ``index_traffic=False`` bills
    only the values.
    """
    topo = group.topology
    m, p = topo.m, topo.link_params
    chunks = group.rank_buffers(rank)
    if not all(isinstance(c, SparseChunk) for c in chunks):
        raise ShapeError("inter-node all-gather expects SparseChunk buffers")
    sizes = {len(c) for c in chunks}
    domains = {c.domain_length for c in chunks}
    if len(sizes) != 1 or len(domains) != 1:
        raise ShapeError(f"chunk lengths/domains differ across nodes: {sorted(sizes)} / {sorted(domains)}")
    (k,) = sizes
    gathered = tuple(chunks)
    outputs = {w: gathered for w in topo.rank_workers(rank)}
    if index_traffic:
        t = costmodel.sparse_allgather_time(m, k, p.alpha_inter, p.beta_inter, p)
        width = p.bytes_per_element + p.index_bytes
    else:
        t = costmodel.allgather_time(m, k, p.alpha_inter, p.beta_inter, p.bytes_per_element)
        width = p.bytes_per_element
    return CollectiveResult(outputs, t, m * (m - 1) * k * width)


def all_reduce_ring(group: WorkerGroup) -> CollectiveResult:
    """Flat all-reduce over all ``P`` workers, summed in ascending worker id."""
    topo = group.topology
    P, p = topo.P, topo.link_params
    d = _dense_same_length(group.buffers)
    total = ordered_sum([np.asarray(b, dtype=np.float64) for b in group.buffers], d)
    outputs = {w: total.copy() for w in topo.workers()}
    t = costmodel.ring_allreduce_cost(P, d, p)
    seg = costmodel.segment_length(d, P)
    return CollectiveResult(outputs, t, 2 * (P - 1) * P * seg * p.bytes_per_element)


def all_reduce_2dtorus(group: WorkerGroup) -> CollectiveResult:
    """Hierarchical dense all-reduce.

    Intra-node reduce-scatter, ``n`` inter-node all-reduces (one per rank) on the
    segments, intra-node all-gather. The sum is taken over ranks within a node
    first, then over nodes in ascending order.
    """
    topo = group.topology
    m, n, p = topo.m, topo.n, topo.link_params
    d = _dense_same_length(group.buffers)
    seg = costmodel.segment_length(d, n)

    scattered: dict = {}
    t_rs = 0.0
    moved = 0
    for node in range(m):
        res = reduce_scatter_intra(group, node)
        scattered.update(res.outputs)
        t_rs = max(t_rs, res.modeled_time)
        moved += res.bytes_moved

    reduced: dict = {}
    for rank in range(n):
        total = ordered_sum([scattered[w] for w in topo.rank_workers(rank)], seg)
        for w in topo.rank_workers(rank):
            reduced[w] = total.copy()
    moved += n * 2 * (m - 1) * m * costmodel.segment_length(seg, m) * p.bytes_per_element

    seg_group = WorkerGroup(topo, [reduced[w] for w in topo.workers()])
    outputs: dict = {}
    t_ag = 0.0
    for node in range(m):
        res = all_gather_intra(seg_group, node, total_length=d)
        outputs.update(res.outputs)
        t_ag = max(t_ag, res.modeled_time)
        moved += res.bytes_moved

    _, t_ar, _ = costmodel.torus2d_cost(m, n, d, p)
    breakdown = {"reduce_scatter": t_rs, "inter_allreduce": t_ar, "all_gather": t_ag}
    return CollectiveResult(outputs, t_rs + t_ar + t_ag, moved, breakdown)
