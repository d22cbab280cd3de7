"""Streaming sparse Gaussian process regression.

Inducing-point GP models (SoR / DTC / FITC / VFE / PEP) trained online by
Kalman-style recursive updates of the posterior over inducing outputs,
with hyper-parameters and inducing inputs learned by stochastic gradient
steps on a recursively accumulated collapsed lower bound.
"""

__version__ = "0.1.0"

from .batch import (
    BatchBoundReport,
    batch_bound,
    batch_sparse_posterior,
    fd_gradient,
    full_gp_lml,
    full_gp_predict,
)
from .data import (
    Dataset,
    coverage,
    default_hyperparameters,
    generate_gp_data,
    integrate_cstr,
    load_dataset,
    rmse,
    save_dataset,
    simulate_cstr,
    train_test_split,
)
from .errors import (
    ContractViolationError,
    DataError,
    IllConditionedError,
    NumericalError,
    StreamGPError,
    ToleranceError,
)
from .gradients import (
    AdjointIntermediates,
    GradientState,
    compute_adjoints,
    ignore_history_ablation,
    init_gradient_state,
    propagate,
)
from .inference import (
    PARAM_STANDARD,
    PARAM_TRANSFORMED,
    KalmanIntermediates,
    MiniBatch,
    PosteriorState,
    PredictiveDistribution,
    cumulative_bound,
    init_state,
    kf_update_moments,
    predict,
    split_into_batches,
    update,
)
from .kernel import Hyperparameters, kernel_matrix, kernel_matrix_grad, se_ard
from .model import (
    BatchGeometry,
    ModelSpec,
    basis,
    batch_geometry,
    noise_correction,
    prediction_correction,
    regularizer,
    total_noise,
)
from .optimizer import (
    AdamState,
    FitResult,
    TrainConfig,
    TraceRecord,
    adam_step,
    fixed_theta_pass,
    init_inducing_subset,
    srgp_fit,
)

__all__ = [
    "AdamState",
    "AdjointIntermediates",
    "BatchBoundReport",
    "BatchGeometry",
    "ContractViolationError",
    "DataError",
    "Dataset",
    "FitResult",
    "GradientState",
    "Hyperparameters",
    "IllConditionedError",
    "KalmanIntermediates",
    "MiniBatch",
    "ModelSpec",
    "NumericalError",
    "PARAM_STANDARD",
    "PARAM_TRANSFORMED",
    "PosteriorState",
    "PredictiveDistribution",
    "StreamGPError",
    "ToleranceError",
    "TraceRecord",
    "TrainConfig",
    "adam_step",
    "basis",
    "batch_bound",
    "batch_geometry",
    "batch_sparse_posterior",
    "compute_adjoints",
    "coverage",
    "cumulative_bound",
    "default_hyperparameters",
    "fd_gradient",
    "fixed_theta_pass",
    "full_gp_lml",
    "full_gp_predict",
    "generate_gp_data",
    "ignore_history_ablation",
    "init_gradient_state",
    "init_inducing_subset",
    "init_state",
    "integrate_cstr",
    "kernel_matrix",
    "kernel_matrix_grad",
    "kf_update_moments",
    "load_dataset",
    "noise_correction",
    "predict",
    "prediction_correction",
    "propagate",
    "regularizer",
    "rmse",
    "save_dataset",
    "se_ard",
    "simulate_cstr",
    "split_into_batches",
    "srgp_fit",
    "total_noise",
    "train_test_split",
    "update",
]
