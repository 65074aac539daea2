"""Segmentation fine-tuning and full-image inference."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch.nn import functional as F

from .. import augment as aug
from ..data.masks import ColorCodeTable, encode_mask
from ..data.segmentation import SegmentationDataset, SegmentationPair
from ..data.splits import SplitSpec, deterministic_split
from ..encoder.checkpoint import Checkpoint, CheckpointMeta, arrays_from_module
from ..errors import ConfigError, TrainingDiverged
from ..history import History
from ..metrics.confusion import ConfusionMatrix, f1_score, mean_iou, pixel_accuracy
from ..seeding import derive_rng, derive_seed
from .model import SegmentationModel


@dataclass
class SegTrainConfig:
    batch_size: int = 4
    epochs: int = 5
    lr: float = 1e-4
    weight_decay: float = 1e-4
    crop: int | None = 1024
    eval_fraction: float = 0.2
    seed: int = 0
    class_weighting: bool = False
    augment: aug.AugmentSpec | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size: must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs: must be >= 0")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ConfigError("lr must be > 0 and weight_decay >= 0")
        if not 0.0 < self.eval_fraction < 1.0:
            raise ConfigError("eval_fraction: must be in (0,1)")

    def resolved_augment(self) -> aug.AugmentSpec:
        if self.augment is not None:
            return self.augment
        ops = [aug.FlipH(0.5), aug.FlipV(0.5)]
        if self.crop:
            ops.append(aug.Crop(self.crop))
        return aug.AugmentSpec(ops=tuple(ops), seed=self.seed)


def _get_pair(dataset, index) -> SegmentationPair:
    if isinstance(dataset, SegmentationDataset):
        return dataset.load_pair(index)
    return dataset[index]


def finetune_segmentation(model: SegmentationModel, dataset,
                          cfg: SegTrainConfig) -> tuple[Checkpoint, History]:
    """Train on a seeded train split, evaluating on the held-out rest.

    dataset is a SegmentationDataset or a sequence of SegmentationPair.
    History rows carry train loss plus eval pixel accuracy (overall and
    macro), macro f1 and mean IoU per epoch.
    """
    n = len(dataset)
    train_idx, eval_idx = deterministic_split(
        n, SplitSpec(1.0 - cfg.eval_fraction, seed=cfg.seed))
    torch.manual_seed(derive_seed(cfg.seed, "torch-seg"))

    spec = cfg.resolved_augment()
    weights = None
    if cfg.class_weighting:
        weights = _inverse_frequency_weights(dataset, train_idx, model.num_classes)

    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr,
                                 weight_decay=cfg.weight_decay)
    history = History(
        columns=["epoch", "train_loss", "pa_overall", "pa_macro", "f1", "miou"],
        extras={"train_indices": train_idx, "eval_indices": eval_idx})

    steps_per_epoch = max(1, math.ceil(len(train_idx) / cfg.batch_size))
    model.train()
    for epoch in range(cfg.epochs):
        order = derive_rng(cfg.seed, "seg-order", epoch).permutation(len(train_idx))
        losses = []
        for b in range(steps_per_epoch):
            chunk = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            if len(chunk) < 2 and len(train_idx) > 1:
                continue  # batch norm needs more than one sample
            if not len(chunk):
                continue
            xs, ys = [], []
            for j, i in enumerate(chunk):
                pair = _get_pair(dataset, train_idx[i])
                img, mask = aug.apply(spec, pair.image, pair.mask,
                                      call_index=epoch * n + int(train_idx[i]))
                xs.append(aug.to_model_input(img, model.normalization))
                ys.append(mask.astype(np.int64))
            x = torch.from_numpy(np.stack(xs))
            y = torch.from_numpy(np.stack(ys))
            logits = model(x)
            loss = F.cross_entropy(logits, y, weight=weights)
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}",
                                       checkpoint=to_checkpoint(model, epoch),
                                       history=history)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        cm = evaluate_segmentation(model, dataset, eval_idx)
        pa_overall, pa_macro = pixel_accuracy(cm)
        _, f1 = f1_score(cm)
        _, miou = mean_iou(cm)
        history.append(epoch, float(np.mean(losses)) if losses else 0.0,
                       pa_overall, pa_macro, f1, miou)
        model.train()

    return to_checkpoint(model, cfg.epochs), history


def _inverse_frequency_weights(dataset, indices, num_classes) -> torch.Tensor:
    counts = np.zeros(num_classes, dtype=np.int64)
    for i in indices:
        pair = _get_pair(dataset, i)
        counts += np.bincount(pair.mask.ravel(), minlength=num_classes)
    freq = counts / max(1, counts.sum())
    weights = np.where(freq > 0, 1.0 / np.maximum(freq, 1e-12), 0.0)
    weights = weights / max(weights.sum(), 1e-12) * num_classes
    return torch.from_numpy(weights.astype(np.float32))


def to_checkpoint(model: SegmentationModel, epochs: int,
                  dataset: str = "", parent_checksum: str | None = None) -> Checkpoint:
    arrays = {**arrays_from_module(model.backbone, "backbone."),
              **arrays_from_module(model.head, "head.")}
    return Checkpoint(arrays=arrays, meta=CheckpointMeta(
        method="segmentation", dataset=dataset, epochs=epochs,
        normalization=model.normalization, parent_checksum=parent_checksum))


def evaluate_segmentation(model: SegmentationModel, dataset,
                          indices=None) -> ConfusionMatrix:
    """Whole-image evaluation into a mergeable confusion matrix."""
    if indices is None:
        indices = range(len(dataset))
    cm = ConfusionMatrix(model.num_classes)
    for i in indices:
        pair = _get_pair(dataset, i)
        pred, _ = predict_mask(model, pair.image)
        cm.update(pair.mask, pred)
    return cm


def predict_mask(model: SegmentationModel, image: np.ndarray,
                 table: ColorCodeTable | None = None,
                 window: tuple[int, int] | None = None):
    """Per-pixel argmax prediction, with an RGB overlay when a table is given.

    Inputs with dimensions not divisible by 32 are reflect-padded and the
    prediction cropped back. window=(size, stride) averages logits over a
    sliding grid instead of one whole-image pass.
    """
    if table is not None and len(table) != model.num_classes:
        raise ConfigError(f"color table has {len(table)} classes, "
                          f"model has {model.num_classes}")
    image = np.asarray(image)
    h, w = image.shape[:2]
    pad_h = (32 - h % 32) % 32
    pad_w = (32 - w % 32) % 32
    padded = np.pad(image, ((0, pad_h), (0, pad_w), (0, 0)), mode="reflect") \
        if pad_h or pad_w else image

    logits = (_window_logits(model, padded, *window) if window
              else _whole_logits(model, padded))
    pred = logits.argmax(axis=0)[:h, :w]
    overlay = encode_mask(pred, table) if table is not None else None
    return pred, overlay


def _whole_logits(model, image) -> np.ndarray:
    model.eval()
    x = torch.from_numpy(aug.to_model_input(image, model.normalization)).unsqueeze(0)
    with torch.no_grad():
        return model(x)[0].numpy()


def _window_logits(model, image, size: int, stride: int) -> np.ndarray:
    h, w = image.shape[:2]
    if size % 32 or size > h or size > w:
        raise ConfigError(f"window size {size} must be a /32 multiple within the image")
    total = np.zeros((model.num_classes, h, w), dtype=np.float64)
    hits = np.zeros((h, w), dtype=np.float64)
    tops = sorted({min(t, h - size) for t in range(0, h, stride)} | {h - size})
    lefts = sorted({min(l, w - size) for l in range(0, w, stride)} | {w - size})
    for top in tops:
        for left in lefts:
            tile = image[top:top + size, left:left + size]
            total[:, top:top + size, left:left + size] += _whole_logits(model, tile)
            hits[top:top + size, left:left + size] += 1
    return total / hits
