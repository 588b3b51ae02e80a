"""Synchronous data-parallel SGD on a simulated cluster.

Each step every worker computes a minibatch gradient on its own shard, the
gradients are aggregated with one of the :mod:`sparsecomm.hitopk` algorithms and
every worker applies ``w <- w - lr * sum_p g_p`` (optionally averaged, optionally
with per-layer LARS rates). Sparse aggregators keep per-worker error-feedback
residuals by default.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .core import SparseCommError, Topology
from .datacache import ShardPlan
from .hitopk import AggregationConfig, aggregate
from .pto import LarsParams, lars_op, pto_apply
from .simnet import WorkerGroup, map_workers

log = logging.getLogger(__name__)


class TrainingDiverged(SparseCommError, FloatingPointError):
    pass


def _layer_slices(d: int, layer_sizes: Sequence[int] | None) -> list[slice]:
    sizes = list(layer_sizes) if layer_sizes else [d]
    if sum(sizes) != d or min(sizes) < 1:
        raise ValueError(f"layer sizes {sizes} do not partition {d} parameters")
    bounds = np.cumsum([0] + sizes)
    return [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


@dataclass
class LeastSquares:
    """``f(w) = mean((X w - y)^2) / 2`` with the parameters split into layers."""

    X: np.ndarray
    y: np.ndarray
    layer_sizes: tuple | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.size:
            raise ValueError("X must be (n_samples, d) and y (n_samples,)")
        self.layers = _layer_slices(self.dim, self.layer_sizes)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @classmethod
    def synthetic(cls, n_samples=4096, d=512, noise=0.1, seed=0, layer_sizes=None) -> "LeastSquares":
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((n_samples, d)) / np.sqrt(d)
        w_true = rng.standard_normal(d)
        y = X @ w_true + noise * rng.standard_normal(n_samples)
        return cls(X, y, layer_sizes)

    def init_weights(self) -> np.ndarray:
        return np.zeros(self.dim)

    def loss(self, w, rows=None) -> float:
        X, y = (self.X, self.y) if rows is None else (self.X[rows], self.y[rows])
        r = X @ w - y
        return 0.5 * float(r @ r) / y.size

    def gradient(self, w, rows=None) -> np.ndarray:
        X, y = (self.X, self.y) if rows is None else (self.X[rows], self.y[rows])
        return X.T @ (X @ w - y) / y.size


@dataclass
class Logistic(LeastSquares):
    """Mean logistic loss with labels in {-1, +1}."""

    @classmethod
    def synthetic(cls, n_samples=4096, d=512, noise=0.0, seed=0, layer_sizes=None) -> "Logistic":
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((n_samples, d)) / np.sqrt(d)
        w_true = rng.standard_normal(d)
        y = np.where(X @ w_true + noise * rng.standard_normal(n_samples) >= 0, 1.0, -1.0)
        return cls(X, y, layer_sizes)

    def loss(self, w, rows=None) -> float:
        X, y = (self.X, self.y) if rows is None else (self.X[rows], self.y[rows])
        return float(np.mean(np.logaddexp(0.0, -y * (X @ w))))

    def gradient(self, w, rows=None) -> np.ndarray:
        X, y = (self.X, self.y) if rows is None else (self.X[rows], self.y[rows])
        z = -y * (X @ w)
        coef = -y * np.exp(-np.logaddexp(0.0, -z))  # -y * sigmoid(z)
        return X.T @ coef / y.size


def constant(lr: float) -> Callable[[int], float]:
    return lambda step: lr


def linear_warmup(lr: float, warmup_steps: int) -> Callable[[int], float]:
    """Ramp linearly from ``lr / warmup_steps`` to ``lr`` over the first steps."""
    if warmup_steps < 1:
        return constant(lr)
    return lambda step: lr * min(1.0, (step + 1) / warmup_steps)


@dataclass
class TrainResult:
    losses: list
    weights: np.ndarray
    max_weight_gap: list = field(default_factory=list)
    residual_defect: list = field(default_factory=list)
    modeled_comm_time: float = 0.0


def train(
    model: LeastSquares,
    topology: Topology,
    config: AggregationConfig,
    steps: int,
    lr=0.2,
    *,
    lars: LarsParams | None = None,
    residuals: bool | None = None,
    average: bool = False,
    batch_size: int = 64,
    seed: int = 0,
    shard_scheme: str = "contiguous",
    check_residuals: bool = False,
) -> TrainResult:
    """Run ``steps`` synchronous SGD steps and return the full-data loss after each.

    ``lr`` is a float or a callable ``step -> lr``. ``residuals`` defaults to on
    for sparse aggregators and off for dense ones. With ``lars`` the update of
    layer ``l`` uses the LARS rate computed from the aggregated gradient (its
    ``lr`` is replaced by the scheduled rate). ``average`` divides the
    aggregated gradient by the worker count.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    schedule = lr if callable(lr) else constant(float(lr))
    use_residuals = config.sparse if residuals is None else bool(residuals)
    P = topology.P
    d = model.dim

    plan = ShardPlan(model.n_samples, P, shard_scheme)
    shards = [np.array(plan.shard(p)) for p in range(P)]
    if min(len(s) for s in shards) < batch_size:
        raise ValueError("batch_size exceeds the smallest shard")

    weights = [model.init_weights() for _ in range(P)]
    errors = [np.zeros(d) for _ in range(P)] if use_residuals else None
    result = TrainResult([], weights[0])

    for step in range(steps):
        def local_gradient(p):
            rng = np.random.default_rng([seed, step, p])
            rows = rng.choice(shards[p], batch_size, replace=False)
            g = model.gradient(weights[p], rows)
            return g + errors[p] if use_residuals else g

        grads = map_workers(local_gradient, list(range(P)), config.max_workers)
        res = aggregate(WorkerGroup(topology, grads), config)
        result.modeled_comm_time += res.modeled_time

        if use_residuals and config.sparse:
            defect = 0.0
            for p in range(P):
                acc = res.details["accumulated"][p]
                sel = res.details["selected"][p]
                e = acc.copy()
                e[sel.indices] = 0.0
                if check_residuals:
                    sent = sel.to_dense()
                    defect = max(defect, float(np.max(np.abs(sent + e - acc))))
                errors[p] = e
            result.residual_defect.append(defect)

        eta = schedule(step)
        if lars is not None:
            step_lars = replace(lars, lr=eta)
            G = res.outputs[0] / P if average else res.outputs[0]
            layers = [(weights[0][s], G[s]) for s in model.layers]
            rates = pto_apply(lars_op(step_lars), layers, P, topology.link_params).outputs
        for p in range(P):
            G = res.outputs[p] / P if average else res.outputs[p]
            if lars is None:
                weights[p] = weights[p] - eta * G
            else:
                w = weights[p].copy()
                for s, lam in zip(model.layers, rates[p]):
                    w[s] -= lam * G[s]
                weights[p] = w

        with np.errstate(over="ignore", invalid="ignore"):
            loss = model.loss(weights[0])
        if not math.isfinite(loss):
            raise TrainingDiverged(
                f"loss became {loss} at step {step} (lr={eta}, algorithm={config.algorithm}); "
                "lower the learning rate or enable averaging"
            )
        result.losses.append(loss)
        result.max_weight_gap.append(max(float(np.max(np.abs(w - weights[0]))) for w in weights))
        if step % 500 == 0:
            log.debug("step %d loss %.6g", step, loss)

    result.weights = weights[0]
    return result
