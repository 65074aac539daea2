"""Pluggable two-stage detector backends.

The core library owns the backbone, pyramid and metrics; proposal and ROI
machinery comes from a registered backend. The reference backend binds
torchvision's Faster R-CNN around our FPNAdapter.
"""

from __future__ import annotations

from typing import Protocol, runtime_checkable

import numpy as np
import torch

from ..data.detection import DetectionRecord
from ..encoder.checkpoint import arrays_from_module
from ..errors import BackendError
from .fpn import FPNAdapter


@runtime_checkable
class DetectorBackend(Protocol):
    """Contract every detection backend must satisfy."""

    num_classes: int

    def train_step(self, batch: list[tuple[np.ndarray, DetectionRecord]]) -> float:
        """One optimization step on (image, ground-truth record) pairs;
        returns the summed loss value."""

    def predict(self, image: np.ndarray, image_id: str) -> DetectionRecord:
        """Scored detections for one image."""

    def set_lr(self, lr: float) -> None:
        """Set the optimizer learning rate (driven by the warmup schedule)."""

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Namespaced weights for checkpointing."""


_REGISTRY: dict[str, type] = {}


def register_detector_backend(name: str):
    def wrap(cls):
        _REGISTRY[name] = cls
        return cls
    return wrap


def available_backends() -> list[str]:
    return sorted(_REGISTRY)


def create_detector_backend(name: str, extractor: FPNAdapter, num_classes: int,
                            **kwargs) -> DetectorBackend:
    if name not in _REGISTRY:
        raise BackendError(
            f"detector backend {name!r} is not registered "
            f"(available: {available_backends() or 'none'}). Install torchvision "
            "for the reference backend or register one via "
            "register_detector_backend.")
    return _REGISTRY[name](extractor, num_classes, **kwargs)


@register_detector_backend("torchvision-fasterrcnn")
class TorchvisionFasterRCNN:
    """Reference backend: torchvision Faster R-CNN over our feature pyramid.

    Class indices are shifted by one internally (torchvision reserves 0
    for background) and shifted back on prediction.
    """

    def __init__(self, extractor: FPNAdapter, num_classes: int,
                 image_size: int = 512, momentum: float = 0.9,
                 weight_decay: float = 1e-4,
                 normalization=None, score_threshold: float = 0.05):
        try:
            from torchvision.models.detection import FasterRCNN
            from torchvision.models.detection.anchor_utils import AnchorGenerator
            from torchvision.ops import MultiScaleRoIAlign
        except ImportError as exc:  # pragma: no cover - environment specific
            raise BackendError(
                "torchvision is required for the reference detection backend; "
                "pip install torchvision") from exc

        self.extractor = extractor
        self.num_classes = num_classes
        mean, std = normalization or ((0.485, 0.456, 0.406), (0.229, 0.224, 0.225))
        anchor_gen = AnchorGenerator(
            sizes=((32,), (64,), (128,), (256,), (512,)),
            aspect_ratios=((0.5, 1.0, 2.0),) * 5)
        roi_pool = MultiScaleRoIAlign(featmap_names=["p2", "p3", "p4", "p5"],
                                      output_size=7, sampling_ratio=2)
        self.model = FasterRCNN(
            extractor, num_classes=num_classes + 1,
            rpn_anchor_generator=anchor_gen,
            box_roi_pool=roi_pool,
            min_size=image_size, max_size=image_size,
            image_mean=list(mean), image_std=list(std),
            box_score_thresh=score_threshold)
        self.optimizer = torch.optim.SGD(self.model.parameters(), lr=0.0,
                                         momentum=momentum, weight_decay=weight_decay)

    def set_lr(self, lr: float) -> None:
        for group in self.optimizer.param_groups:
            group["lr"] = lr

    @staticmethod
    def _to_tensor(image: np.ndarray) -> torch.Tensor:
        return torch.from_numpy(np.ascontiguousarray(image)).permute(2, 0, 1).float() / 255.0

    def train_step(self, batch) -> float:
        self.model.train()
        images, targets = [], []
        for image, record in batch:
            images.append(self._to_tensor(image))
            targets.append({
                "boxes": torch.from_numpy(record.boxes.astype(np.float32)),
                "labels": torch.from_numpy(record.labels + 1),
            })
        losses = self.model(images, targets)
        total = sum(losses.values())
        if not torch.isfinite(total):
            return float(total.detach())
        self.optimizer.zero_grad()
        total.backward()
        self.optimizer.step()
        return float(total.detach())

    def predict(self, image: np.ndarray, image_id: str) -> DetectionRecord:
        self.model.eval()
        h, w = image.shape[:2]
        with torch.no_grad():
            out = self.model([self._to_tensor(image)])[0]
        keep = out["labels"] >= 1
        return DetectionRecord(
            image_id=image_id, width=w, height=h,
            boxes=out["boxes"][keep].numpy(),
            labels=out["labels"][keep].numpy() - 1,
            scores=out["scores"][keep].numpy().clip(0.0, 1.0),
        )

    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = arrays_from_module(self.extractor.body, "det_backbone.")
        arrays.update(arrays_from_module(self.extractor.fpn, "fpn."))
        arrays.update(arrays_from_module(self.model.rpn, "head.rpn."))
        arrays.update(arrays_from_module(self.model.roi_heads, "head.roi."))
        return arrays
