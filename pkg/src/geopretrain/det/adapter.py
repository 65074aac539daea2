"""Export pre-trained backbones for detection and drive fine-tuning."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..encoder.backbone import ResNetBackbone, spec_from_arrays
from ..encoder.checkpoint import (
    Checkpoint,
    CheckpointMeta,
    arrays_from_module,
    load_arrays_into_module,
)
from ..encoder.transplant import TransplantReport, transplant_backbone
from ..errors import ConfigError, TrainingDiverged
from ..history import History
from ..metrics.ap import ap_table
from ..pretrain.schedules import linear_warmup_lr
from ..seeding import derive_rng, derive_seed
from .backend import DetectorBackend
from .fpn import FPNAdapter

HISTORY_EVERY = 100


@dataclass
class DetTrainConfig:
    iterations: int = 5000
    batch_size: int = 2
    base_lr: float = 0.01
    warmup_iterations: int = 500
    image_size: int = 512
    momentum: float = 0.9
    weight_decay: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError("iterations: must be >= 0")
        if self.iterations and self.warmup_iterations >= self.iterations:
            raise ConfigError("warmup_iterations: must be < iterations")
        if self.batch_size < 1:
            raise ConfigError("batch_size: must be >= 1")
        if self.base_lr <= 0:
            raise ConfigError("base_lr: must be > 0")


def export_detection_backbone(ckpt: Checkpoint, lateral_channels: int = 256,
                              seed: int = 0) -> tuple[Checkpoint, FPNAdapter, TransplantReport]:
    """Convert a pre-training checkpoint into a pyramid-ready extractor.

    The converted checkpoint renames backbone arrays into the
    det_backbone namespace and adds freshly initialized fpn arrays; the
    report records exactly which keys matched and which were initialized.
    """
    spec = spec_from_arrays(ckpt.arrays, "backbone.")
    backbone = ResNetBackbone(spec)
    extractor = FPNAdapter(backbone, lateral_channels, seed=seed)
    skeleton = arrays_from_module(extractor.body, "det_backbone.")
    skeleton.update(arrays_from_module(extractor.fpn, "fpn."))
    converted, report = transplant_backbone(ckpt, skeleton, mode="strict")
    load_arrays_into_module(extractor.body, converted.arrays, "det_backbone.")
    load_arrays_into_module(extractor.fpn, converted.arrays, "fpn.")
    return converted, extractor, report


def finetune_detection(backend: DetectorBackend, records, cfg: DetTrainConfig,
                       image_provider) -> tuple[Checkpoint, History]:
    """Iteration-driven fine-tuning with linear learning-rate warmup.

    image_provider maps a DetectionRecord to its HxWx3 uint8 image.
    History logs total loss and lr every 100 iterations (plus the final
    one).
    """
    if not isinstance(backend, DetectorBackend):
        raise ConfigError("backend does not satisfy the DetectorBackend protocol")
    records = list(records)
    if not records:
        raise ConfigError("no training records")
    torch.manual_seed(derive_seed(cfg.seed, "torch-det"))
    rng = derive_rng(cfg.seed, "det-order")

    history = History(columns=["iteration", "loss", "lr"])
    queue: list[int] = []
    for iteration in range(cfg.iterations):
        lr = linear_warmup_lr(iteration, cfg.base_lr, cfg.warmup_iterations)
        backend.set_lr(lr)
        while len(queue) < cfg.batch_size:
            queue.extend(rng.permutation(len(records)).tolist())
        picks, queue = queue[:cfg.batch_size], queue[cfg.batch_size:]
        batch = [(image_provider(records[i]), records[i]) for i in picks]
        loss = backend.train_step(batch)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite detection loss at iteration {iteration}",
                                   checkpoint=detection_checkpoint(backend, iteration),
                                   history=history)
        if iteration % HISTORY_EVERY == 0 or iteration == cfg.iterations - 1:
            history.append(iteration, float(loss), lr)

    return detection_checkpoint(backend, cfg.iterations), history


def detection_checkpoint(backend: DetectorBackend, iterations: int,
                         dataset: str = "",
                         parent_checksum: str | None = None) -> Checkpoint:
    return Checkpoint(arrays=backend.state_arrays(),
                      meta=CheckpointMeta(method="detection", dataset=dataset,
                                          epochs=iterations,
                                          parent_checksum=parent_checksum))


def predict_and_score(backend: DetectorBackend, eval_records, image_provider,
                      num_classes: int):
    """Run the backend over an evaluation split and score the AP family."""
    predictions = [backend.predict(image_provider(rec), rec.image_id)
                   for rec in eval_records]
    table = ap_table(predictions, list(eval_records), num_classes)
    return predictions, table
