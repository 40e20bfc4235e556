"""Datasets, the cycle-m partitioner, the convex reference learner, and the
convergence-rate analyzer."""

from .convergence import ConvergenceReport, fit_convergence
from .datasets import Dataset, load_idx, make_synthetic, write_csv, write_idx
from .model import (
    SGDConfig,
    SoftmaxRegressor,
    evaluate,
    init_params,
    local_sgd,
    sgd_path,
    sgd_with_diagnostics,
    smoothness_ratios,
    softmax_grad,
    softmax_loss,
)
from .partition import PartitionSpec, cycle_m_partition

__all__ = [
    "Dataset",
    "make_synthetic",
    "load_idx",
    "write_csv",
    "write_idx",
    "PartitionSpec",
    "cycle_m_partition",
    "SGDConfig",
    "SoftmaxRegressor",
    "init_params",
    "local_sgd",
    "sgd_path",
    "sgd_with_diagnostics",
    "evaluate",
    "softmax_loss",
    "softmax_grad",
    "smoothness_ratios",
    "ConvergenceReport",
    "fit_convergence",
]
