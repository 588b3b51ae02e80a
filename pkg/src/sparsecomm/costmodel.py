"""Alpha-beta time model for the collectives used by sparse and dense aggregation.

Every term is latency (``alpha`` per message round) plus bandwidth (``beta`` per
byte). ``log`` is ``ceil(log2(p))``. The simulator in :mod:`sparsecomm.simnet`
takes its modeled times from the functions here, so the two never disagree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import Density, LinkParams, k_from_density

#: Default step-2 selection cost, seconds per element.
DEFAULT_SELECT_SECONDS_PER_ELEMENT = 1e-9

#: MSTopK on a V100: 30 streaming passes over 4-byte values at ~900 GB/s.
V100_SELECT_SECONDS_PER_ELEMENT = 30 * 4 / 900e9


def log2_ceil(p: int) -> int:
    if p < 1:
        raise ValueError("participant count must be >= 1")
    return math.ceil(math.log2(p)) if p > 1 else 0


def ring_reduce_scatter_time(p: int, elements: float, alpha: float, beta: float, nbytes: int) -> float:
    """Ring reduce-scatter of an ``elements``-long vector over ``p`` ranks.

    ``(p-1) alpha + nbytes (p-1) elements/p beta``.
    """
    return (p - 1) * alpha + nbytes * (p - 1) * elements / p * beta


def allgather_time(p: int, elements_per_rank: float, alpha: float, beta: float, nbytes: int) -> float:
    """All-gather where every rank contributes ``elements_per_rank`` elements.

    ``alpha log p + nbytes (p-1) elements_per_rank beta``.
    """
    return alpha * log2_ceil(p) + nbytes * (p - 1) * elements_per_rank * beta


def ring_allreduce_time(p: int, elements: float, alpha: float, beta: float, nbytes: int) -> float:
    """Ring reduce-scatter followed by a ring all-gather (``2(p-1)`` rounds)."""
    return 2 * (p - 1) * alpha + 2 * nbytes * (p - 1) * elements / p * beta


def allgather_cost(P: int, k: float, params: LinkParams) -> float:
    """All-gather of ``k`` values per worker over the inter-node link."""
    if k < 0:
        raise ValueError("k must be non-negative")
    return allgather_time(P, k, params.alpha_inter, params.beta_inter, params.bytes_per_element)


def sparse_allgather_time(p: int, k: float, alpha: float, beta: float, params: LinkParams) -> float:
    """Two all-gathers, one for ``k`` values and one for their ``k`` indices."""
    return allgather_time(p, k, alpha, beta, params.bytes_per_element) + allgather_time(
        p, k, alpha, beta, params.index_bytes
    )


@dataclass(frozen=True)
class CostBreakdown:
    """Per-step modeled times of hierarchical top-k aggregation, in seconds.

    ``t1`` intra-node reduce-scatter, ``t2`` selection, ``t3`` inter-node
    all-gather, ``t4`` intra-node all-gather.
    """

    t1: float
    t2: float
    t3: float
    t4: float

    @property
    def total(self) -> float:
        return self.t1 + self.t2 + self.t3 + self.t4

    @property
    def communication(self) -> float:
        return self.t1 + self.t3 + self.t4

    def as_dict(self) -> dict:
        return {"t1": self.t1, "t2": self.t2, "t3": self.t3, "t4": self.t4, "total": self.total}


def segment_length(d: int, n: int) -> int:
    return -(-d // n)


def hitopk_cost(
    m: int,
    n: int,
    d: int,
    rho,
    params: LinkParams,
    per_elem_select: float = DEFAULT_SELECT_SECONDS_PER_ELEMENT,
    *,
    index_traffic: bool = True,
) -> CostBreakdown:
    """Modeled time of each step of hierarchical top-k aggregation.

    Each rank selects ``k_seg = k_from_density(ceil(d/n), rho)`` elements, so the
    inter-node step moves ``k_seg`` elements per node and the final intra-node
    all-gather is billed for ``m * k_seg`` elements per rank (the worst case in
    which no two nodes pick the same index). With ``index_traffic`` the
    inter-node step also pays for an all-gather of the indices; without it only
    the values are billed.
    """
    if m < 1 or n < 1 or d < 1:
        raise ValueError("m, n and d must be >= 1")
    rho = Density(rho) if not isinstance(rho, Density) else rho
    k_seg = k_from_density(segment_length(d, n), rho)
    p = params
    t1 = ring_reduce_scatter_time(n, d, p.alpha_intra, p.beta_intra, p.bytes_per_element)
    t2 = per_elem_select * d / n
    if index_traffic:
        t3 = sparse_allgather_time(m, k_seg, p.alpha_inter, p.beta_inter, p)
    else:
        t3 = allgather_time(m, k_seg, p.alpha_inter, p.beta_inter, p.bytes_per_element)
    t4 = allgather_time(n, m * k_seg, p.alpha_intra, p.beta_intra, p.bytes_per_element)
    return CostBreakdown(t1, t2, t3, t4)


def naiveag_cost(P: int, d: int, rho, params: LinkParams) -> float:
    """Flat all-gather of values and indices across all ``P`` workers."""
    k = k_from_density(d, rho)
    return sparse_allgather_time(P, k, params.alpha_inter, params.beta_inter, params)


def ring_allreduce_cost(P: int, d: int, params: LinkParams) -> float:
    """Dense ring all-reduce billed entirely on the inter-node link."""
    return ring_allreduce_time(P, d, params.alpha_inter, params.beta_inter, params.bytes_per_element)


def tree_allreduce_cost(P: int, d: int, params: LinkParams) -> float:
    """Pipelined tree all-reduce: ``2 log P`` latency rounds, ``2 d`` elements of traffic.

    Analytical stand-in for a tree all-reduce baseline; there is no numeric
    counterpart in the simulator.
    """
    return 2 * log2_ceil(P) * params.alpha_inter + 2 * params.bytes_per_element * d * params.beta_inter * (P > 1)


def torus2d_cost(m: int, n: int, d: int, params: LinkParams) -> tuple[float, float, float]:
    """Phase times of the 2D-torus all-reduce.

    Intra-node reduce-scatter, ``n`` concurrent inter-node ring all-reduces on
    ``ceil(d/n)``-long segments, intra-node all-gather of the segments.
    """
    p = params
    seg = segment_length(d, n)
    t_rs = ring_reduce_scatter_time(n, d, p.alpha_intra, p.beta_intra, p.bytes_per_element)
    t_ar = ring_allreduce_time(m, seg, p.alpha_inter, p.beta_inter, p.bytes_per_element)
    t_ag = allgather_time(n, seg, p.alpha_intra, p.beta_intra, p.bytes_per_element)
    return t_rs, t_ar, t_ag


def budget(N: float, E: float, b: float, P: int, t_iter: float) -> tuple[float, float]:
    """Throughput ``T = b P / t_iter`` and training budget ``N E / T`` in seconds."""
    if min(N, E, b, P, t_iter) <= 0:
        raise ValueError("budget inputs must be positive")
    T = b * P / t_iter
    return T, N * E / T


def budget_from_throughput(N: float, E: float, T: float) -> float:
    if min(N, E, T) <= 0:
        raise ValueError("budget inputs must be positive")
    return N * E / T
