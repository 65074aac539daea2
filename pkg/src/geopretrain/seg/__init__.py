"""Segmentation model (output stride 32), fine-tuning and inference."""

from .model import (
    ASPP,
    OUTPUT_STRIDE,
    SegHead,
    SegHeadSpec,
    SegmentationModel,
    build_segmentation_model,
    head_param_count,
    resolve_classifier_width,
)
from .train import (
    SegTrainConfig,
    evaluate_segmentation,
    finetune_segmentation,
    predict_mask,
    to_checkpoint,
)

__all__ = [
    "ASPP",
    "OUTPUT_STRIDE",
    "SegHead",
    "SegHeadSpec",
    "SegTrainConfig",
    "SegmentationModel",
    "build_segmentation_model",
    "evaluate_segmentation",
    "finetune_segmentation",
    "head_param_count",
    "predict_mask",
    "resolve_classifier_width",
    "to_checkpoint",
]
