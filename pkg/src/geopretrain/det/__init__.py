"""Detection: pyramid adapter, pluggable two-stage backend, fine-tune driver."""

from .adapter import (
    DetTrainConfig,
    detection_checkpoint,
    export_detection_backbone,
    finetune_detection,
    predict_and_score,
)
from .backend import (
    DetectorBackend,
    TorchvisionFasterRCNN,
    available_backends,
    create_detector_backend,
    register_detector_backend,
)
from .fpn import FPNAdapter, FPNHead, LATERAL_CHANNELS, P_LEVELS

__all__ = [
    "DetTrainConfig",
    "DetectorBackend",
    "FPNAdapter",
    "FPNHead",
    "LATERAL_CHANNELS",
    "P_LEVELS",
    "TorchvisionFasterRCNN",
    "available_backends",
    "create_detector_backend",
    "detection_checkpoint",
    "export_detection_backbone",
    "finetune_detection",
    "predict_and_score",
    "register_detector_backend",
]
