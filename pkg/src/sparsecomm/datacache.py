"""Two-level cache of training samples over a slow networked store.

Reads go memory -> local file -> networked store. A miss at a level is filled
from the level below: raw bytes land in the local file cache, preprocessed
samples in the in-memory key-value cache (keyed by sample id). I/O time is
modeled from per-level latency and throughput, never measured.
"""

from __future__ import annotations

import hashlib
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

LEVELS = ("memory", "local_file", "nfs")


class SampleNotFound(KeyError):
    pass


class OwnershipError(LookupError):
    """The sample belongs to another node's shard."""


@dataclass(frozen=True)
class LevelTiming:
    """Modeled cost of one read: ``latency + nbytes / throughput``."""

    latency: float
    throughput: float = float("inf")

    def read_time(self, nbytes: int) -> float:
        return self.latency + (nbytes / self.throughput if self.throughput != float("inf") else 0.0)


DEFAULT_TIMINGS = {
    "nfs": LevelTiming(10e-3),
    "local_file": LevelTiming(1e-3),
    "memory": LevelTiming(10e-6),
}


class SyntheticStore:
    """Deterministic raw samples: ``sample_bytes`` pseudo-random bytes per id."""

    def __init__(self, n_samples: int, sample_bytes: int = 64, seed: int = 0):
        self.n_samples = n_samples
        self.sample_bytes = sample_bytes
        self.seed = seed

    def __contains__(self, sample_id: int) -> bool:
        return 0 <= sample_id < self.n_samples

    def __len__(self) -> int:
        return self.n_samples

    def read(self, sample_id: int) -> bytes:
        if sample_id not in self:
            raise SampleNotFound(sample_id)
        rng = np.random.default_rng([self.seed, sample_id])
        return rng.bytes(self.sample_bytes)


class DirectoryStore:
    """One file per sample, named ``{id:08d}.bin``."""

    def __init__(self, root):
        self.root = Path(root)
        self._ids = sorted(int(p.stem) for p in self.root.glob("*.bin") if p.stem.isdigit())

    @staticmethod
    def filename(sample_id: int) -> str:
        return f"{sample_id:08d}.bin"

    @classmethod
    def write(cls, root, samples: dict) -> "DirectoryStore":
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        for sid, raw in samples.items():
            (root / cls.filename(sid)).write_bytes(raw)
        return cls(root)

    def __contains__(self, sample_id: int) -> bool:
        return (self.root / self.filename(sample_id)).is_file()

    def __len__(self) -> int:
        return len(self._ids)

    def read(self, sample_id: int) -> bytes:
        path = self.root / self.filename(sample_id)
        if not path.is_file():
            raise SampleNotFound(sample_id)
        return path.read_bytes()


@dataclass(frozen=True)
class ShardPlan:
    """Assigns every sample id to exactly one node."""

    n_samples: int
    n_nodes: int
    scheme: str = "contiguous"

    def __post_init__(self):
        if self.n_samples < 0 or self.n_nodes < 1:
            raise ValueError("need n_samples >= 0 and n_nodes >= 1")
        if self.scheme not in ("contiguous", "hashed"):
            raise ValueError("scheme must be 'contiguous' or 'hashed'")

    def owner(self, sample_id: int) -> int:
        if not 0 <= sample_id < self.n_samples:
            raise SampleNotFound(sample_id)
        if self.scheme == "hashed":
            digest = hashlib.blake2b(sample_id.to_bytes(8, "little"), digest_size=8).digest()
            return int.from_bytes(digest, "little") % self.n_nodes
        base, extra = divmod(self.n_samples, self.n_nodes)
        cut = extra * (base + 1)
        if sample_id < cut:
            return sample_id // (base + 1)
        return extra + (sample_id - cut) // base

    def shard(self, node: int) -> list[int]:
        return [i for i in range(self.n_samples) if self.owner(i) == node]


@dataclass
class CacheStats:
    hits: dict = field(default_factory=lambda: dict.fromkeys(LEVELS, 0))
    misses: dict = field(default_factory=lambda: dict.fromkeys(LEVELS, 0))
    bytes_read: dict = field(default_factory=lambda: dict.fromkeys(LEVELS, 0))
    requests: int = 0
    preprocess_calls: int = 0
    modeled_io_time: float = 0.0

    def hit_rate(self, level: str = "memory") -> float:
        return self.hits[level] / self.requests if self.requests else 0.0

    def as_row(self) -> dict:
        row = {"requests": self.requests}
        for lvl in LEVELS:
            row[f"{lvl}_hits"] = self.hits[lvl]
            row[f"{lvl}_misses"] = self.misses[lvl]
            row[f"{lvl}_bytes"] = self.bytes_read[lvl]
        row["preprocess_calls"] = self.preprocess_calls
        row["modeled_io_time"] = self.modeled_io_time
        return row


class LocalFileCache:
    """Raw-byte cache standing in for the node's local disk.

    Kept as its own object so it can outlive one :class:`DataCache` (the local
    disk survives between training runs). With ``root`` set the bytes are
    actually written to files named like the networked store's.
    """

    def __init__(self, root=None, capacity: int | None = None):
        self.root = Path(root) if root is not None else None
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
        self.capacity = capacity
        self._entries: OrderedDict = OrderedDict()

    def __contains__(self, sample_id: int) -> bool:
        return sample_id in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, sample_id: int) -> bytes:
        self._entries.move_to_end(sample_id)
        if self.root is not None:
            return (self.root / DirectoryStore.filename(sample_id)).read_bytes()
        return self._entries[sample_id]

    def put(self, sample_id: int, raw: bytes) -> None:
        if self.root is not None:
            (self.root / DirectoryStore.filename(sample_id)).write_bytes(raw)
            self._entries[sample_id] = None
        else:
            self._entries[sample_id] = raw
        self._entries.move_to_end(sample_id)
        while self.capacity is not None and len(self._entries) > self.capacity:
            evicted, _ = self._entries.popitem(last=False)
            if self.root is not None:
                (self.root / DirectoryStore.filename(evicted)).unlink(missing_ok=True)


class DataCache:
    """Per-node read-through cache: memory (LRU, ``capacity`` entries) over local file over store.

    ``enabled=False`` turns both cache levels off so every request goes to the
    store and is preprocessed again (the uncached baseline).
    """

    def __init__(
        self,
        store,
        *,
        node: int = 0,
        plan: ShardPlan | None = None,
        capacity: int | None = None,
        file_cache: LocalFileCache | None = None,
        timings: dict | None = None,
        enabled: bool = True,
    ):
        self.store = store
        self.node = node
        self.plan = plan
        self.capacity = capacity
        self.file_cache = file_cache if file_cache is not None else LocalFileCache()
        self.timings = {**DEFAULT_TIMINGS, **(timings or {})}
        self.enabled = enabled
        self._memory: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self._stats = CacheStats()
        self.total = CacheStats()

    def __len__(self) -> int:
        return len(self._memory)

    def _charge(self, level: str, nbytes: int) -> None:
        t = self.timings[level].read_time(nbytes)
        for s in (self._stats, self.total):
            s.hits[level] += 1
            s.bytes_read[level] += nbytes
            s.modeled_io_time += t

    def _miss(self, level: str) -> None:
        for s in (self._stats, self.total):
            s.misses[level] += 1

    def get(self, sample_id: int, preprocess: Callable[[bytes], object]):
        if sample_id not in self.store:
            raise SampleNotFound(sample_id)
        if self.plan is not None and self.plan.owner(sample_id) != self.node:
            raise OwnershipError(
                f"sample {sample_id} belongs to node {self.plan.owner(sample_id)}, not {self.node}"
            )
        with self._lock:
            for s in (self._stats, self.total):
                s.requests += 1
            if self.enabled and sample_id in self._memory:
                self._memory.move_to_end(sample_id)
                self._charge("memory", 0)
                return self._memory[sample_id]

            if self.enabled:
                self._miss("memory")
            if self.enabled and sample_id in self.file_cache:
                raw = self.file_cache.get(sample_id)
                self._charge("local_file", len(raw))
            else:
                if self.enabled:
                    self._miss("local_file")
                raw = self.store.read(sample_id)
                self._charge("nfs", len(raw))
                if self.enabled:
                    self.file_cache.put(sample_id, raw)

            sample = preprocess(raw)
            for s in (self._stats, self.total):
                s.preprocess_calls += 1
            if self.enabled and self.capacity != 0:
                self._memory[sample_id] = sample
                while self.capacity is not None and len(self._memory) > self.capacity:
                    self._memory.popitem(last=False)
            return sample

    def epoch_report(self) -> CacheStats:
        """Counters since the previous report; resets them."""
        with self._lock:
            report, self._stats = self._stats, CacheStats()
        return report


def run_epochs(cache: DataCache, ids, epochs: int, preprocess) -> list[CacheStats]:
    """Request ``ids`` in order once per epoch; one report per epoch."""
    reports = []
    for _ in range(epochs):
        for sid in ids:
            cache.get(sid, preprocess)
        reports.append(cache.epoch_report())
    return reports


def identity_preprocess(raw: bytes) -> np.ndarray:
    """Decode raw bytes into a float vector scaled to [0, 1]."""
    return np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / 255.0
