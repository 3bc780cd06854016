"""Memory-efficient linear-layer backpropagation via randomized matrix multiplication.

A linear layer normally stores its input batch X for the backward pass.  Here
it can instead store the much smaller projection S^T X under a random sketch S
(regenerated from a seed in backward), making the weight gradient an unbiased
randomized estimate while input and bias gradients stay exact.  The package
bundles the layer, variance estimators comparing sketch noise against
minibatch noise, Monte Carlo verification suites, a small SGD trainer, and a
JSONL-emitting CLI.
"""

from .linalg import Matrix, ShapeError, as_matrix, frobenius_norm_sq, load_csv, matmul, save_csv, transpose
from .linear import (
    IntegrityError,
    LayerGrads,
    LinearLayer,
    SavedContext,
    backward,
    exact_weight_grad,
    forward,
    layer_from_bytes,
    layer_to_bytes,
    memory_ratio,
    stored_activation_bytes,
)
from .prng import RngState, derive_seed
from .sketch import (
    GAUSSIAN,
    RADEMACHER,
    SketchHandle,
    SketchSpec,
    compressed_dim,
    derive_handle,
    project,
    sample_sketch,
)
from .trainer import (
    Dataset,
    DatasetParams,
    MlpModel,
    StepMetrics,
    TrainConfig,
    TrainingDivergedError,
    evaluate,
    generate_blobs,
    init_model,
    load_dataset_csv,
    load_model,
    save_dataset_csv,
    save_model,
    train,
    variance_report_records,
)
from .variance import (
    VarianceReport,
    check_bound,
    correlation_ratio,
    empirical_rmm_variance,
    reports_to_jsonl,
    rmm_variance,
    sgd_report,
    sgd_variance,
)

__version__ = "0.1.0"

__all__ = [
    "Matrix",
    "ShapeError",
    "as_matrix",
    "frobenius_norm_sq",
    "load_csv",
    "matmul",
    "save_csv",
    "transpose",
    "IntegrityError",
    "LayerGrads",
    "LinearLayer",
    "SavedContext",
    "backward",
    "exact_weight_grad",
    "forward",
    "layer_from_bytes",
    "layer_to_bytes",
    "memory_ratio",
    "stored_activation_bytes",
    "RngState",
    "derive_seed",
    "GAUSSIAN",
    "RADEMACHER",
    "SketchHandle",
    "SketchSpec",
    "compressed_dim",
    "derive_handle",
    "project",
    "sample_sketch",
    "Dataset",
    "DatasetParams",
    "MlpModel",
    "StepMetrics",
    "TrainConfig",
    "TrainingDivergedError",
    "evaluate",
    "generate_blobs",
    "init_model",
    "load_dataset_csv",
    "load_model",
    "save_dataset_csv",
    "save_model",
    "train",
    "variance_report_records",
    "VarianceReport",
    "check_bound",
    "correlation_ratio",
    "empirical_rmm_variance",
    "reports_to_jsonl",
    "rmm_variance",
    "sgd_report",
    "sgd_variance",
    "__version__",
]
