"""scikit-learn compatible wrappers around the selectors and the simulated trainer."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .core import Density, LinkParams, Topology, k_from_density
from .hitopk import ALGORITHMS, AggregationConfig
from .pto import LarsParams
from .topk import MSTopKParams, exact_topk, mstopk
from .trainer import LeastSquares, linear_warmup, train


class TopKSparsifier(TransformerMixin, BaseEstimator):
    """Keep the ``k = max(1, floor(density * n_features))`` largest-magnitude entries of each row.

    Parameters
    ----------
    density : float in (0, 1]
    method : {"mstopk", "exact"}
    trials : int
        Threshold-search rounds for ``method="mstopk"``.
    random_state : int
        Seed of the window draw; row ``i`` uses stream ``i``.
    """

    def __init__(self, density=0.01, method="mstopk", trials=30, random_state=0):
        self.density = density
        self.method = method
        self.trials = trials
        self.random_state = random_state

    def fit(self, X, y=None):
        X = validate_data(self, X, dtype=np.float64)
        Density(self.density)
        if self.method not in ("mstopk", "exact"):
            raise ValueError(f"method must be 'mstopk' or 'exact', got {self.method!r}")
        self.k_ = k_from_density(X.shape[1], self.density)
        return self

    def transform(self, X):
        check_is_fitted(self, "k_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        out = np.zeros_like(X)
        params = MSTopKParams(self.trials, self.random_state)
        for i, row in enumerate(X):
            if self.method == "exact":
                chunk = exact_topk(row, self.k_)
            else:
                chunk = mstopk(row, self.k_, params, stream=i)
            out[i, chunk.indices] = chunk.values
        return out


class DistributedSGDRegressor(RegressorMixin, BaseEstimator):
    """Least-squares linear regression trained by simulated data-parallel SGD.

    The samples are sharded over ``m * n`` simulated workers and the gradients
    aggregated with ``aggregator`` each step. There is no intercept; centre the
    data or add a constant column.
    """

    def __init__(
        self,
        m=4,
        n=2,
        aggregator="hitopk",
        density=0.01,
        steps=2000,
        learning_rate=0.2,
        warmup_steps=0,
        batch_size=64,
        residuals=None,
        average=False,
        lars=False,
        trust=0.001,
        trials=30,
        random_state=0,
    ):
        self.m = m
        self.n = n
        self.aggregator = aggregator
        self.density = density
        self.steps = steps
        self.learning_rate = learning_rate
        self.warmup_steps = warmup_steps
        self.batch_size = batch_size
        self.residuals = residuals
        self.average = average
        self.lars = lars
        self.trust = trust
        self.trials = trials
        self.random_state = random_state

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=np.float64, y_numeric=True)
        if self.aggregator not in ALGORITHMS:
            raise ValueError(f"aggregator must be one of {ALGORITHMS}")
        topo = Topology(self.m, self.n, LinkParams.public_cloud())
        config = AggregationConfig(
            density=Density(self.density),
            mstopk_params=MSTopKParams(self.trials, self.random_state),
            algorithm=self.aggregator,
        )
        model = LeastSquares(X, y)
        lars = LarsParams(trust=self.trust, lr=self.learning_rate) if self.lars else None
        result = train(
            model,
            topo,
            config,
            self.steps,
            linear_warmup(self.learning_rate, self.warmup_steps),
            lars=lars,
            residuals=self.residuals,
            average=self.average,
            batch_size=self.batch_size,
            seed=self.random_state,
        )
        self.coef_ = result.weights
        self.loss_curve_ = result.losses
        self.modeled_comm_time_ = result.modeled_comm_time
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return X @ self.coef_
