"""Sparse gradient communication on a simulated GPU cluster.

Approximate top-k selection (MSTopK), hierarchical top-k aggregation, dense
baselines, an alpha-beta cost model, the parallel tensor operator with LARS,
a two-level sample cache and a toy synchronous SGD trainer.
"""

from .core import (
    ConfigurationError,
    DenseVector,
    Density,
    LinkParams,
    ShapeError,
    SparseChunk,
    Topology,
    k_from_density,
)
from .costmodel import CostBreakdown, allgather_cost, budget, hitopk_cost, naiveag_cost
from .estimators import DistributedSGDRegressor, TopKSparsifier
from .hitopk import AggregationConfig, aggregate, hitopkcomm, naive_ag
from .pto import LarsParams, lars_rate, pto_apply
from .simnet import CollectiveResult, WorkerGroup
from .topk import MSTopKParams, ThresholdState, exact_topk, mstopk

__version__ = "0.1.0"

__all__ = [
    "AggregationConfig",
    "CollectiveResult",
    "ConfigurationError",
    "CostBreakdown",
    "DenseVector",
    "Density",
    "DistributedSGDRegressor",
    "LarsParams",
    "LinkParams",
    "MSTopKParams",
    "ShapeError",
    "SparseChunk",
    "ThresholdState",
    "TopKSparsifier",
    "Topology",
    "WorkerGroup",
    "aggregate",
    "allgather_cost",
    "budget",
    "exact_topk",
    "hitopk_cost",
    "hitopkcomm",
    "k_from_density",
    "lars_rate",
    "mstopk",
    "naive_ag",
    "naiveag_cost",
    "pto_apply",
]
