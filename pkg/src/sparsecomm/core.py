"""Shared domain types: dense vectors, sparse chunks, densities and cluster topology."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np


class SparseCommError(Exception):
    """Base class for errors raised by this package."""


class ShapeError(SparseCommError, ValueError):
    """Buffers handed to a collective do not have compatible shapes."""


class ConfigurationError(SparseCommError, ValueError):
    """A parameter combination cannot be executed."""


class DenseVector:
    """Immutable, finite, 1-D float64 vector.

    The wrapped array is read-only; ``np.asarray(vec)`` returns it without a copy.
    """

    __slots__ = ("_data",)

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64, copy=True).reshape(-1)
        if arr.size == 0:
            raise ShapeError("DenseVector must have length >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("DenseVector elements must be finite")
        arr.flags.writeable = False
        self._data = arr

    @property
    def data(self) -> np.ndarray:
        return self._data

    def __len__(self) -> int:
        return self._data.size

    def __array__(self, dtype=None, copy=None):
        if dtype is not None and np.dtype(dtype) != self._data.dtype:
            return self._data.astype(dtype)
        if copy:
            return self._data.copy()
        return self._data

    def __iter__(self) -> Iterator[float]:
        return iter(self._data.tolist())

    def __eq__(self, other) -> bool:
        if not isinstance(other, DenseVector):
            return NotImplemented
        return np.array_equal(self._data, other._data)

    def __hash__(self):
        return hash(self._data.tobytes())

    def __repr__(self) -> str:
        return f"DenseVector(d={len(self)})"


VectorLike = Union[DenseVector, np.ndarray, list, tuple]


def as_array(x: VectorLike) -> np.ndarray:
    """Return ``x`` as a finite 1-D float64 array (no copy for DenseVector)."""
    if isinstance(x, DenseVector):
        return x.data
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise ShapeError("vector must have length >= 1")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector elements must be finite")
    return arr


@dataclass(frozen=True)
class SparseChunk:
    """Paired values and indices selected from a vector of length ``domain_length``."""

    values: np.ndarray
    indices: np.ndarray
    domain_length: int

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        indices = np.array(self.indices, dtype=np.int64).reshape(-1)
        if values.size != indices.size:
            raise ShapeError(
                f"values and indices differ in length ({values.size} != {indices.size})"
            )
        if self.domain_length < 1:
            raise ValueError("domain_length must be positive")
        if indices.size:
            if indices.min() < 0 or indices.max() >= self.domain_length:
                raise IndexError("chunk index outside [0, domain_length)")
            if np.unique(indices).size != indices.size:
                raise ValueError("chunk indices must be pairwise distinct")
        values.flags.writeable = False
        indices.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "domain_length", int(self.domain_length))

    def __len__(self) -> int:
        return self.values.size

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.domain_length)
        out[self.indices] = self.values
        return out

    def nbytes(self, value_bytes: int = 4, index_bytes: int = 4) -> int:
        return len(self) * (value_bytes + index_bytes)


@dataclass(frozen=True)
class Density:
    """Fraction of components kept by sparsification, ``0 < rho <= 1``."""

    rho: float

    def __post_init__(self):
        rho = float(self.rho)
        if not (0.0 < rho <= 1.0):
            raise ValueError(f"density must lie in (0, 1], got {self.rho!r}")
        object.__setattr__(self, "rho", rho)

    def k(self, d: int) -> int:
        return k_from_density(d, self)

    def __float__(self) -> float:
        return self.rho


def _rho(rho) -> float:
    return rho.rho if isinstance(rho, Density) else Density(rho).rho


def k_from_density(d: int, rho: Union[Density, float]) -> int:
    """Number of kept components: ``max(1, floor(rho * d))``.

    The product is rounded to 9 decimals before flooring so that values such as
    ``0.29 * 100`` count as 29 rather than 28.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    r = _rho(rho)
    return max(1, min(int(d), math.floor(round(r * d, 9))))


@dataclass(frozen=True)
class LinkParams:
    """Alpha-beta parameters for the two link classes of a cluster.

    ``alpha_*`` are per-message latencies in seconds, ``beta_*`` transfer times in
    seconds per byte. ``bytes_per_element`` is the width billed for gradient values
    (4 for FP32, 2 for FP16); ``index_bytes`` is the width billed for sparse indices.
    """

    alpha_intra: float = 0.0
    beta_intra: float = 0.0
    alpha_inter: float = 0.0
    beta_inter: float = 0.0
    bytes_per_element: int = 4
    index_bytes: int = 4

    def __post_init__(self):
        for name in ("alpha_intra", "beta_intra", "alpha_inter", "beta_inter"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.bytes_per_element not in (2, 4):
            raise ValueError("bytes_per_element must be 2 (FP16) or 4 (FP32)")
        if self.index_bytes < 1:
            raise ValueError("index_bytes must be positive")

    @classmethod
    def public_cloud(cls, bytes_per_element: int = 4) -> "LinkParams":
        """8-GPU NVLink nodes joined by 25 Gb/s Ethernet.

        NVLink is taken as 150 GB/s per GPU with 2 us latency; Ethernet as
        25 Gb/s (3.2e-10 s/byte) with 20 us latency.
        """
        return cls(
            alpha_intra=2e-6,
            beta_intra=1.0 / 150e9,
            alpha_inter=20e-6,
            beta_inter=8.0 / 25e9,
            bytes_per_element=bytes_per_element,
        )


@dataclass(frozen=True)
class Topology:
    """``m`` nodes with ``n`` ranks each.

    Workers are numbered ``0 .. m*n-1`` with ``worker = node * n + rank``.
    """

    m: int
    n: int
    link_params: LinkParams = field(default_factory=LinkParams)

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError("topology needs m >= 1 and n >= 1")

    @property
    def P(self) -> int:
        return self.m * self.n

    def to_id(self, node: int, rank: int) -> int:
        if not (0 <= node < self.m and 0 <= rank < self.n):
            raise IndexError(f"(node={node}, rank={rank}) outside {self.m}x{self.n} grid")
        return node * self.n + rank

    def to_pair(self, worker: int) -> tuple[int, int]:
        if not 0 <= worker < self.P:
            raise IndexError(f"worker {worker} outside [0, {self.P})")
        return divmod(worker, self.n)

    def workers(self) -> range:
        return range(self.P)

    def node_workers(self, node: int) -> list[int]:
        return [self.to_id(node, j) for j in range(self.n)]

    def rank_workers(self, rank: int) -> list[int]:
        return [self.to_id(i, rank) for i in range(self.m)]
