"""Confidence-aware label smoothing, curriculum training and calibration.

Desk-scale toolkit: annotate datasets with per-sample human or model
confidence, train small softmax classifiers with confidence-smoothed targets
and confidence-ranked curricula, and measure how calibrated the results are.
"""

__version__ = "0.1.0"

from .calibration import (
    BinStats,
    CalibrationReport,
    ece,
    make_report,
    reliability_bins,
    top1_accuracy,
)
from .confidence import (
    ConfidenceEntry,
    ConfidenceTable,
    human_confidence_scalar,
    human_confidence_table,
    load_table,
    precompute_model_confidence,
    save_table,
    sigma_max,
)
from .curriculum import (
    CurriculumSchedule,
    advance,
    gate_loss,
    included_fraction,
    initial_threshold,
    make_schedule,
    update_factor,
)
from .dataset import (
    AnnotatedSample,
    DataFormatError,
    Dataset,
    annotation_distribution,
    generate_synthetic,
    load_dataset,
    modal_label,
    save_dataset,
    split,
)
from .kernels import BACKEND
from .smoothing import (
    SmoothingConfig,
    cross_entropy,
    hc_smooth,
    mc_smooth,
    one_hot,
    uniform_smooth,
)
from .trainer import (
    CurriculumParams,
    ModelParams,
    TrainConfig,
    TrainHistory,
    TrainResult,
    TrainingDivergedError,
    forward,
    gradient,
    init_model,
    load_model,
    lr_at,
    predict_all,
    predict_proba,
    save_model,
    sgd_step,
    train,
)

__all__ = [
    "__version__",
    "BACKEND",
    "AnnotatedSample",
    "BinStats",
    "CalibrationReport",
    "ConfidenceEntry",
    "ConfidenceTable",
    "CurriculumParams",
    "CurriculumSchedule",
    "DataFormatError",
    "Dataset",
    "ModelParams",
    "SmoothingConfig",
    "TrainConfig",
    "TrainHistory",
    "TrainResult",
    "TrainingDivergedError",
    "advance",
    "annotation_distribution",
    "cross_entropy",
    "ece",
    "forward",
    "gate_loss",
    "generate_synthetic",
    "gradient",
    "hc_smooth",
    "human_confidence_scalar",
    "human_confidence_table",
    "included_fraction",
    "init_model",
    "initial_threshold",
    "load_dataset",
    "load_model",
    "load_table",
    "lr_at",
    "make_report",
    "make_schedule",
    "mc_smooth",
    "modal_label",
    "one_hot",
    "precompute_model_confidence",
    "predict_all",
    "predict_proba",
    "reliability_bins",
    "save_dataset",
    "save_model",
    "save_table",
    "sgd_step",
    "sigma_max",
    "split",
    "top1_accuracy",
    "train",
    "uniform_smooth",
    "update_factor",
]
