"""Quality-aware calibration and fusion of forensic-detector scores over near-duplicate images."""

__version__ = "0.1.0"

from .calibration import (
    CalibrationModel,
    ClassCoefficients,
    FitConfig,
    class_stats,
    corrected_logit,
    corrected_logits,
    fit,
    fuse_corrected,
    loo_fit,
    normalize_quality,
)
from .errors import InputError, NumericalError, QuadError
from .kernels import BACKEND
from .types import Dataset, FusedScore, ImageFormat, InstanceMeta, InstanceRecord, Label, QuerySet, validate_dataset

__all__ = [
    "BACKEND",
    "CalibrationModel",
    "ClassCoefficients",
    "Dataset",
    "FitConfig",
    "FusedScore",
    "ImageFormat",
    "InputError",
    "InstanceMeta",
    "InstanceRecord",
    "Label",
    "NumericalError",
    "QuadError",
    "QuerySet",
    "class_stats",
    "corrected_logit",
    "corrected_logits",
    "fit",
    "fuse_corrected",
    "loo_fit",
    "normalize_quality",
    "validate_dataset",
]
