"""In-domain pre-training: supervised and stop-gradient Siamese recipes."""

from .schedules import linear_warmup_lr, multistep_lr, one_cycle_lr
from .simsiam import (
    PredictionMLP,
    ProjectionMLP,
    SimSiamConfig,
    SimSiamModel,
    collapse_metric,
    collapse_threshold,
    negcos,
    optimizer_param_groups,
    simsiam_loss,
    train_simsiam,
)
from .supervised import (
    AccuracyResult,
    ClassifierHead,
    SupervisedClassifier,
    SupTrainConfig,
    evaluate_accuracy,
    train_supervised,
)

__all__ = [
    "AccuracyResult",
    "ClassifierHead",
    "PredictionMLP",
    "ProjectionMLP",
    "SimSiamConfig",
    "SimSiamModel",
    "SupervisedClassifier",
    "SupTrainConfig",
    "collapse_metric",
    "collapse_threshold",
    "evaluate_accuracy",
    "linear_warmup_lr",
    "multistep_lr",
    "negcos",
    "one_cycle_lr",
    "optimizer_param_groups",
    "simsiam_loss",
    "train_simsiam",
]
