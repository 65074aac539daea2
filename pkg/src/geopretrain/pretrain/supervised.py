"""Supervised in-domain pre-training: classification head, cross-entropy,
one-cycle schedule, best-by-eval-accuracy checkpoint selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .. import augment as aug
from ..data.classification import ClassificationDataset
from ..data.splits import SplitSpec, deterministic_split
from ..encoder.backbone import ResNetBackbone, init_module, spec_from_arrays
from ..encoder.checkpoint import (
    Checkpoint,
    CheckpointMeta,
    arrays_from_module,
    load_arrays_into_module,
)
from ..errors import ConfigError, TrainingDiverged
from ..history import History
from ..seeding import derive_rng, derive_seed
from .schedules import one_cycle_lr


@dataclass
class SupTrainConfig:
    batch_size: int = 120
    epochs: int = 100
    peak_lr: float = 1e-3
    pct_warmup: float = 0.3
    weight_decay: float = 0.0
    eval_fraction: float = 0.1
    seed: int = 0
    augment: aug.AugmentSpec | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size: must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs: must be >= 0")
        if self.peak_lr <= 0:
            raise ConfigError("peak_lr: must be > 0")
        if not 0.0 < self.eval_fraction < 1.0:
            raise ConfigError("eval_fraction: must be in (0,1)")


class ClassifierHead(nn.Module):
    """Global average pool plus one linear layer."""

    def __init__(self, in_channels: int, num_classes: int):
        super().__init__()
        self.fc = nn.Linear(in_channels, num_classes)

    def forward(self, c5: torch.Tensor) -> torch.Tensor:
        return self.fc(c5.mean(dim=(2, 3)))


class SupervisedClassifier(nn.Module):
    def __init__(self, backbone: ResNetBackbone, num_classes: int):
        super().__init__()
        self.backbone = backbone
        self.head = ClassifierHead(backbone.feature_channels[-1], num_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.backbone(x)["c5"])


@dataclass(frozen=True)
class AccuracyResult:
    global_accuracy: float
    per_class: np.ndarray = field(compare=False, default=None)
    macro_accuracy: float = 0.0


def evaluate_accuracy(predict, samples, num_classes: int,
                      batch_size: int = 64) -> AccuracyResult:
    """Global and per-class accuracy of a predictor over (input, label) pairs.

    predict maps a stacked input batch to predicted class indices. Global
    accuracy is correct/total; macro averages per-class accuracy over
    classes with at least one sample.
    """
    if not len(samples):
        raise ConfigError("evaluation set is empty")
    correct = np.zeros(num_classes, dtype=np.int64)
    totals = np.zeros(num_classes, dtype=np.int64)
    for start in range(0, len(samples), batch_size):
        chunk = samples[start:start + batch_size]
        xs = np.stack([np.asarray(x) for x, _ in chunk])
        ys = np.asarray([y for _, y in chunk])
        preds = np.asarray(predict(xs)).reshape(-1)
        for y, p in zip(ys, preds):
            totals[y] += 1
            correct[y] += int(y == p)
    present = totals > 0
    per_class = np.zeros(num_classes)
    per_class[present] = correct[present] / totals[present]
    return AccuracyResult(
        global_accuracy=float(correct.sum() / totals.sum()),
        per_class=per_class,
        macro_accuracy=float(per_class[present].mean()),
    )


def _load_batch(dataset, indices, augment_spec, call_base, normalization):
    views = []
    for j, idx in enumerate(indices):
        img = dataset.load_image(idx)
        if augment_spec is not None:
            img = aug.apply(augment_spec, img, call_index=call_base + j)
        views.append(aug.to_model_input(img, normalization))
    return torch.from_numpy(np.stack(views))


def train_supervised(dataset: ClassificationDataset, generalist: Checkpoint,
                     cfg: SupTrainConfig) -> tuple[Checkpoint, History]:
    """Fine-tune generalist backbone weights with a classification head.

    Returns the checkpoint with the best evaluation accuracy seen, plus a
    per-epoch history of train loss, eval accuracy and learning rate.
    """
    if dataset.num_classes < 2:
        raise ConfigError("dataset must have at least 2 classes")

    spec = spec_from_arrays(generalist.arrays)
    backbone = ResNetBackbone(spec)
    load_arrays_into_module(backbone, generalist.arrays, "backbone.")
    model = SupervisedClassifier(backbone, dataset.num_classes)
    init_module(model.head, derive_rng(cfg.seed, "sup-head-init"))
    torch.manual_seed(derive_seed(cfg.seed, "torch"))

    labels = np.asarray([y for _, y in dataset.samples], dtype=np.int64)
    train_idx, eval_idx = deterministic_split(
        len(dataset), SplitSpec(1.0 - cfg.eval_fraction, seed=cfg.seed))
    normalization = generalist.meta.normalization

    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.peak_lr,
                                 weight_decay=cfg.weight_decay)
    steps_per_epoch = max(1, math.ceil(len(train_idx) / cfg.batch_size))
    total_steps = max(1, cfg.epochs * steps_per_epoch)

    history = History(columns=["epoch", "train_loss", "eval_acc", "lr"],
                      extras={"train_indices": train_idx, "eval_indices": eval_idx})

    def snapshot() -> dict[str, np.ndarray]:
        return {**arrays_from_module(model.backbone, "backbone."),
                **arrays_from_module(model.head, "head.")}

    def eval_accuracy() -> float:
        model.eval()

        def predict(xs):
            with torch.no_grad():
                return model(torch.from_numpy(xs)).argmax(dim=1).numpy()

        samples = [(aug.to_model_input(dataset.load_image(i), normalization), labels[i])
                   for i in eval_idx]
        acc = evaluate_accuracy(predict, samples, dataset.num_classes,
                                batch_size=cfg.batch_size)
        model.train()
        return acc.global_accuracy

    best_arrays = snapshot()
    best_acc = -1.0
    last_finite = best_arrays
    step = 0
    model.train()
    for epoch in range(cfg.epochs):
        order = derive_rng(cfg.seed, "sup-order", epoch).permutation(len(train_idx))
        losses = []
        lr = cfg.peak_lr
        for b in range(steps_per_epoch):
            batch_idx = [train_idx[i] for i in order[b * cfg.batch_size:(b + 1) * cfg.batch_size]]
            if len(batch_idx) < 2 and len(train_idx) > 1:
                continue  # batch norm needs more than one sample
            if not batch_idx:
                continue
            xs = _load_batch(dataset, batch_idx, cfg.augment,
                             call_base=epoch * len(dataset), normalization=normalization)
            ys = torch.from_numpy(labels[batch_idx])
            lr = one_cycle_lr(step, total_steps, cfg.peak_lr, cfg.pct_warmup)
            for group in optimizer.param_groups:
                group["lr"] = lr
            logits = model(xs)
            loss = F.cross_entropy(logits, ys)
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} step {step}",
                    checkpoint=_to_checkpoint(last_finite, generalist, dataset, epoch),
                    history=history)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
            step += 1
        if all(np.isfinite(v).all() for v in snapshot().values()):
            last_finite = snapshot()
        acc = eval_accuracy()
        history.append(epoch, float(np.mean(losses)) if losses else 0.0, acc, lr)
        if acc > best_acc:
            best_acc = acc
            best_arrays = snapshot()

    ckpt = _to_checkpoint(best_arrays, generalist, dataset, cfg.epochs)
    return ckpt, history


def _to_checkpoint(arrays, generalist, dataset, epochs) -> Checkpoint:
    return Checkpoint(
        arrays=arrays,
        meta=CheckpointMeta(
            method="supervised",
            dataset=dataset.root.name,
            epochs=epochs,
            normalization=generalist.meta.normalization,
            parent_checksum=generalist.source_checksum or generalist.meta.parent_checksum,
        ),
    )
