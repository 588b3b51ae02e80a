"""Parallel tensor operator: split a replicated computation across workers, then all-gather.

When every worker already holds the same input (e.g. the aggregated gradients),
each one computes only its contiguous block of the workload and the per-worker
results are concatenated with an all-gather. Layer-wise learning rates (LARS)
are the canonical use.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import costmodel
from .core import ConfigurationError, LinkParams, ShapeError, as_array
from .simnet import map_workers


@dataclass(frozen=True)
class LarsParams:
    trust: float = 0.001
    lr: float = 0.1
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.trust <= 0 or self.lr <= 0:
            raise ValueError("trust coefficient and learning rate must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


@dataclass(frozen=True)
class LarsRate:
    rate: float
    fallback: bool = False

    def __float__(self) -> float:
        return self.rate


def lars_rate(w, g, p: LarsParams, *, with_flag: bool = False):
    """Layer-wise rate ``trust * lr * |w| / (|g| + weight_decay * |w|)``.

    A zero denominator (both norms zero, or ``|g| = 0`` with no weight decay)
    yields ``trust * lr``; ``with_flag=True`` returns a :class:`LarsRate` that
    records whether that fallback fired.
    """
    w = as_array(w)
    g = as_array(g)
    if w.shape != g.shape:
        raise ShapeError(f"weights and gradients differ in length ({w.size} != {g.size})")
    w_norm = float(np.linalg.norm(w))
    g_norm = float(np.linalg.norm(g))
    denom = g_norm + p.weight_decay * w_norm
    if denom == 0.0:
        out = LarsRate(p.trust * p.lr, True)
    else:
        out = LarsRate(p.trust * p.lr * w_norm / denom)
    return out if with_flag else out.rate


def partition(W: int, P: int) -> list[range]:
    """Contiguous blocks covering ``range(W)``; the first ``W % P`` blocks get one extra item."""
    if W < 1:
        raise ConfigurationError("workload must contain at least one item")
    if P < 1:
        raise ConfigurationError("need at least one worker")
    base, extra = divmod(W, P)
    blocks, start = [], 0
    for p in range(P):
        size = base + (p < extra)
        blocks.append(range(start, start + size))
        start += size
    return blocks


@dataclass
class PTOResult:
    outputs: dict
    partitions: list
    modeled_time: float
    details: dict = field(default_factory=dict)


def pto_apply(
    op: Callable[[Sequence], Sequence],
    workload: Sequence,
    P: int,
    params: LinkParams | None = None,
    *,
    max_workers: int | None = None,
) -> PTOResult:
    """Evaluate ``op`` on ``P`` contiguous blocks of ``workload`` and all-gather.

    ``op`` maps a sequence of items to a sequence of results and must be
    separable: ``op(a + b) == op(a) + op(b)``. Every worker ends with the full
    concatenated result. The gather is billed as an all-gather of the largest
    per-worker result.
    """
    blocks = partition(len(workload), P)
    pieces = map_workers(lambda r: list(op([workload[i] for i in r])), blocks, max_workers)
    result = [item for piece in pieces for item in piece]
    outputs = {w: list(result) for w in range(P)}
    params = params or LinkParams()
    t = costmodel.allgather_cost(P, max(len(piece) for piece in pieces), params)
    return PTOResult(outputs, blocks, t, {"pieces": pieces})


def lars_op(p: LarsParams) -> Callable[[Sequence], list]:
    """Separable op mapping ``(w, g)`` layer pairs to their LARS rates."""

    def op(layers):
        return [lars_rate(w, g, p) for w, g in layers]

    return op


def lars_rates(layers: Sequence, p: LarsParams, P: int = 1, params: LinkParams | None = None) -> list[float]:
    """Per-layer LARS rates, computed with :func:`pto_apply` across ``P`` workers."""
    return pto_apply(lars_op(p), layers, P, params).outputs[0]
