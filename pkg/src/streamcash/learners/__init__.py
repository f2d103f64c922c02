"""Hand-written learners and preprocessing, fitted as linear pipelines."""

from .base import (
    DEFAULT_HYPERPARAMS,
    INCREMENTAL_KINDS,
    LEARNER_KINDS,
    PREPROC_KINDS,
    RESTRICTED_KINDS,
    NotIncrementalError,
)
from .linear import GLM, LogisticSGD
from .pipeline import TrainedModel, audit, emit, fit_pipeline, partial_fit, predict_batch
from .trees import GradientBoosting

__all__ = [
    "DEFAULT_HYPERPARAMS",
    "INCREMENTAL_KINDS",
    "LEARNER_KINDS",
    "PREPROC_KINDS",
    "RESTRICTED_KINDS",
    "NotIncrementalError",
    "GLM",
    "LogisticSGD",
    "GradientBoosting",
    "TrainedModel",
    "audit",
    "emit",
    "fit_pipeline",
    "partial_fit",
    "predict_batch",
]
