"""Simultaneous inference for high-dimensional confounded linear models.

The pipeline removes latent-confounding structure from the design by a
spectral projection, debiases an initial Lasso estimate coordinate by
coordinate through node-wise regressions, and tests all coefficients at
once with a data-driven threshold that controls the false discovery rate.
"""

from .benchmark import ExperimentGrid, MethodSpec, ResultRow, run_grid, run_replication
from .dataset import Dataset, write_dataset_csv, write_truth_csv
from .debias import (
    DebiasedInference,
    NodewiseResult,
    PipelineConfig,
    debias_coordinate,
    default_lambda_j,
    nodewise_residual,
    run_pipeline,
    test_statistics,
)
from .errors import (
    ConstructionError,
    DataError,
    DeconfoundError,
    DegenerateProblemError,
    NumericError,
    ParameterError,
    ShapeError,
)
from .lasso import (
    CvConfig,
    InitialEstimate,
    LassoFit,
    LassoProblem,
    initial_estimate,
    select_lambda_cv,
    solve_lasso,
)
from .multiple_testing import (
    EvalMetrics,
    TestDecision,
    data_driven_threshold,
    evaluate,
    gaussian_tail,
)
from .simulate import (
    GraphSpec,
    GroundTruth,
    SimConfig,
    build_precision,
    generate_dataset,
    place_signals,
)
from .spectral import (
    SpectralTransform,
    SvdFactors,
    apply_transform,
    compute_svd,
    decorrelating_transform,
    estimate_num_factors,
    identity_transform,
    trim_transform,
)

__version__ = "0.1.0"

__all__ = [
    "ConstructionError",
    "CvConfig",
    "DataError",
    "Dataset",
    "DebiasedInference",
    "DeconfoundError",
    "DegenerateProblemError",
    "EvalMetrics",
    "ExperimentGrid",
    "GraphSpec",
    "GroundTruth",
    "InitialEstimate",
    "LassoFit",
    "LassoProblem",
    "MethodSpec",
    "NodewiseResult",
    "NumericError",
    "ParameterError",
    "PipelineConfig",
    "ResultRow",
    "ShapeError",
    "SimConfig",
    "SpectralTransform",
    "SvdFactors",
    "TestDecision",
    "apply_transform",
    "build_precision",
    "compute_svd",
    "data_driven_threshold",
    "debias_coordinate",
    "decorrelating_transform",
    "default_lambda_j",
    "estimate_num_factors",
    "evaluate",
    "gaussian_tail",
    "generate_dataset",
    "identity_transform",
    "initial_estimate",
    "nodewise_residual",
    "place_signals",
    "run_grid",
    "run_pipeline",
    "run_replication",
    "select_lambda_cv",
    "solve_lasso",
    "test_statistics",
    "trim_transform",
    "write_dataset_csv",
    "write_truth_csv",
]
