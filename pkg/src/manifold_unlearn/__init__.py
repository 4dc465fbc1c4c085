"""Manifold-guided machine unlearning on small numpy MLP encoders.

The hot kernels (Jacobi SVD, k-NN selection, SISA cost simulation) come from
a compiled Cython extension when it is available and from numpy otherwise;
``manifold_unlearn.BACKEND`` says which.
"""
from ._kernels import BACKEND
from .baselines import TrainConfig, fine_tune, gradient_ascent_unlearn, retrain_from_scratch, train
from .datagen import Dataset, UnlearnSplit, gen_gaussian_clusters, load_idx, make_split
from .manif_smc import (
    BezierPath,
    UnlearnConfig,
    UnlearnReport,
    bezier_point,
    estimate_lipschitz,
    logit_drift_bound,
    manif_smc_unlearn,
)
from .metrics import MetricsRecord, evaluate
from .mmcr import mmcr_regularizer, nuclear_norm, svd_jacobi
from .nn import EncoderSpec, ForwardResult, forward, gradient, init_params, representations

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BezierPath",
    "Dataset",
    "EncoderSpec",
    "ForwardResult",
    "MetricsRecord",
    "TrainConfig",
    "UnlearnConfig",
    "UnlearnReport",
    "UnlearnSplit",
    "bezier_point",
    "estimate_lipschitz",
    "evaluate",
    "fine_tune",
    "forward",
    "gen_gaussian_clusters",
    "gradient",
    "gradient_ascent_unlearn",
    "init_params",
    "load_idx",
    "logit_drift_bound",
    "make_split",
    "manif_smc_unlearn",
    "mmcr_regularizer",
    "nuclear_norm",
    "representations",
    "retrain_from_scratch",
    "svd_jacobi",
    "train",
]
