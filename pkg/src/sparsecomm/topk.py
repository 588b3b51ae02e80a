"""Exact top-k selection and the multi-sampling approximate selector (MSTopK).

MSTopK never sorts. It bisects a magnitude threshold between the mean and the
maximum of ``|x|`` for a fixed number of trials, remembering the best threshold
that keeps at most ``k`` elements (``thres1``) and the best one that keeps more
than ``k`` (``thres2``). Everything at or above ``thres1`` is kept; the remaining
``k - k1`` slots are filled by a random contiguous window of the elements lying
between the two thresholds. When no lower threshold was found the window is
drawn from the nonzero elements below ``thres1``, topped up with the
lowest-index zeros if there are too few.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SparseChunk, VectorLike, as_array


@dataclass(frozen=True)
class MSTopKParams:
    trials: int = 30
    rng_seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass(frozen=True)
class ThresholdState:
    """Outcome of the threshold search.

    ``k1`` elements satisfy ``|x| >= thres1`` (``k1 <= k``) and ``k2`` satisfy
    ``|x| >= thres2`` (``k2 > k``); ``set1``/``set2`` say whether either bound was
    ever found.
    """

    thres1: float = 0.0
    thres2: float = 0.0
    k1: int = 0
    k2: int = 0
    set1: bool = False
    set2: bool = False


def _check_k(k: int, d: int) -> int:
    k = int(k)
    if not 1 <= k <= d:
        raise IndexError(f"k={k} outside [1, {d}]")
    return k


def exact_topk(x: VectorLike, k: int) -> SparseChunk:
    """The ``k`` largest-magnitude entries of ``x``, indices ascending.

    Ties at the k-th magnitude go to the lowest indices.
    """
    arr = as_array(x)
    d = arr.size
    k = _check_k(k, d)
    a = np.abs(arr)
    if k == d:
        idx = np.arange(d)
    else:
        kth = np.partition(a, d - k)[d - k]
        above = np.flatnonzero(a > kth)
        ties = np.flatnonzero(a == kth)[: k - above.size]
        idx = np.sort(np.concatenate([above, ties]))
    return SparseChunk(arr[idx], idx, d)


def threshold_search(a: np.ndarray, k: int, trials: int) -> ThresholdState:
    """Bisect the ratio in ``thres = mean + ratio * (max - mean)`` for ``trials`` rounds.

    ``a`` holds magnitudes. Counts use ``>=``.
    """
    mean = float(a.mean())
    upper = float(a.max())
    lo, hi = 0.0, 1.0
    k1, k2 = 0, a.size
    thres1 = thres2 = 0.0
    set1 = set2 = False
    for _ in range(trials):
        ratio = lo + (hi - lo) / 2
        thres = mean + ratio * (upper - mean)
        nnz = int(np.count_nonzero(a >= thres))
        if nnz <= k:
            hi = ratio
            if nnz > k1:
                k1, thres1, set1 = nnz, thres, True
        else:
            lo = ratio
            if nnz < k2:
                k2, thres2, set2 = nnz, thres, True
    return ThresholdState(thres1, thres2, k1, k2, set1, set2)


def window_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based (Philox) generator keyed on ``(seed, stream)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & (2**64 - 1), int(stream)])))


def mstopk(
    x: VectorLike,
    k: int,
    params: MSTopKParams | None = None,
    *,
    stream: int = 0,
    return_state: bool = False,
):
    """Approximate top-k returning exactly ``k`` (value, index) pairs.

    ``stream`` separates the random window draw of different callers sharing one
    seed (e.g. the workers of a cluster). Indices are the sure winners
    (``|x| >= thres1``, ascending) followed by the sampled window.
    """
    params = params or MSTopKParams()
    arr = as_array(x)
    d = arr.size
    k = _check_k(k, d)
    a = np.abs(arr)

    if a.max() == 0.0:
        state = ThresholdState(k2=d)
        idx = np.arange(k)
    else:
        state = threshold_search(a, k, params.trials)
        below = a < state.thres1 if state.k1 > 0 else np.ones(d, dtype=bool)
        winners = np.flatnonzero(~below)
        need = k - winners.size
        if state.set2:
            between = np.flatnonzero(below & (a >= state.thres2))
            filler = np.empty(0, dtype=np.int64)
        else:
            # no lower bound found: draw from the nonzero remainder, zeros only as filler
            between = np.flatnonzero(below & (a > 0))
            filler = np.flatnonzero(below & (a == 0))[: max(0, need - between.size)]
        take = need - filler.size
        start = int(window_rng(params.rng_seed, stream).integers(0, between.size - take + 1))
        idx = np.concatenate([winners, between[start : start + take], filler])

    chunk = SparseChunk(arr[idx], idx, d)
    if return_state:
        return chunk, state
    return chunk


def kth_magnitudes(x: VectorLike, k: int) -> tuple[float, float]:
    """The k-th and (k+1)-th largest magnitudes (the latter is 0 when k == d)."""
    a = np.sort(np.abs(as_array(x)))[::-1]
    k = _check_k(k, a.size)
    return float(a[k - 1]), float(a[k]) if k < a.size else 0.0


def brackets_cut(x: VectorLike, k: int, state: ThresholdState) -> bool:
    """Whether the searched thresholds bracket an exact top-k cut.

    With ``t_k`` and ``t_k1`` the k-th and (k+1)-th largest magnitudes, any
    threshold in ``(t_k1, t_k]`` keeps exactly ``k`` elements. The search
    guarantees ``thres2 <= t_k1`` when ``set2`` and ``t_k1 < thres1`` when ``set1``.
    """
    t_k, t_k1 = kth_magnitudes(x, k)
    ok = True
    if state.set1:
        ok &= t_k1 < state.thres1 and state.k1 <= k
    if state.set2:
        ok &= state.thres2 <= t_k1 and state.k2 > k
    if state.set1 and state.set2:
        ok &= state.thres2 <= state.thres1
    return bool(ok)
