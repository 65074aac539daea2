"""Streaming confusion-matrix accumulation and the pixel metrics on top of it.

Counts stay exact integers; floating point only enters when ratios are
taken. Matrices merge by addition, so evaluation shards combine exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import GeopretrainError


class ConfusionMatrix:
    """K x K integer counts, rows = ground truth, columns = prediction."""

    def __init__(self, num_classes: int, counts: np.ndarray | None = None):
        if num_classes < 1:
            raise GeopretrainError("need at least one class")
        self.num_classes = num_classes
        if counts is None:
            counts = np.zeros((num_classes, num_classes), dtype=np.int64)
        else:
            counts = np.asarray(counts, dtype=np.int64)
            if counts.shape != (num_classes, num_classes):
                raise GeopretrainError(f"counts shape {counts.shape} != K x K")
            if (counts < 0).any():
                raise GeopretrainError("counts must be non-negative")
        self.counts = counts

    def update(self, gt_map, pred_map) -> "ConfusionMatrix":
        """Accumulate per-pixel counts from matching gt/prediction maps."""
        gt = np.asarray(gt_map).ravel()
        pred = np.asarray(pred_map).ravel()
        if np.asarray(gt_map).shape != np.asarray(pred_map).shape:
            raise GeopretrainError(
                f"shape mismatch: gt {np.asarray(gt_map).shape} vs "
                f"pred {np.asarray(pred_map).shape}"
            )
        k = self.num_classes
        if len(gt) and (gt.min() < 0 or gt.max() >= k or pred.min() < 0 or pred.max() >= k):
            raise GeopretrainError(f"class index out of range for K={k}")
        flat = gt * k + pred
        self.counts += np.bincount(flat, minlength=k * k).reshape(k, k)
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        """Elementwise sum; associative and commutative."""
        if other.num_classes != self.num_classes:
            raise GeopretrainError("cannot merge matrices of different class counts")
        return ConfusionMatrix(self.num_classes, self.counts + other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other) -> bool:
        return (isinstance(other, ConfusionMatrix)
                and np.array_equal(self.counts, other.counts))


@dataclass(frozen=True)
class PrecisionRecall:
    precision: float
    recall: float
    absent: bool  # class appears neither in gt nor in predictions


def precision_recall(cm: ConfusionMatrix, k: int) -> PrecisionRecall:
    """Per-class precision TP/(TP+FP) and recall TP/(TP+FN); 0/0 maps to 0."""
    c = cm.counts
    tp = int(c[k, k])
    fp = int(c[:, k].sum()) - tp
    fn = int(c[k, :].sum()) - tp
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return PrecisionRecall(precision, recall, absent=(tp + fp + fn == 0))


def f1_score(cm: ConfusionMatrix) -> tuple[np.ndarray, float]:
    """Per-class f1 = 2PR/(P+R) and the macro mean over classes in gt."""
    per_class = np.zeros(cm.num_classes)
    for k in range(cm.num_classes):
        pr = precision_recall(cm, k)
        denom = pr.precision + pr.recall
        per_class[k] = 2 * pr.precision * pr.recall / denom if denom else 0.0
    in_gt = cm.counts.sum(axis=1) > 0
    macro = float(per_class[in_gt].mean()) if in_gt.any() else 0.0
    return per_class, macro


def pixel_accuracy(cm: ConfusionMatrix) -> tuple[float, float]:
    """(overall, macro) pixel accuracy.

    Overall is trace/total; macro averages per-class recall over classes
    that appear in the ground truth.
    """
    if cm.total == 0:
        raise GeopretrainError("empty confusion matrix")
    overall = float(np.trace(cm.counts) / cm.total)
    row_sums = cm.counts.sum(axis=1)
    in_gt = row_sums > 0
    per_class = np.diag(cm.counts)[in_gt] / row_sums[in_gt]
    macro = float(per_class.mean())
    return overall, macro


def mean_iou(cm: ConfusionMatrix) -> tuple[np.ndarray, float]:
    """Per-class IoU = TP/(TP+FP+FN) and the mean over classes in gt or pred."""
    if cm.total == 0:
        raise GeopretrainError("empty confusion matrix")
    tp = np.diag(cm.counts).astype(np.float64)
    union = cm.counts.sum(axis=0) + cm.counts.sum(axis=1) - np.diag(cm.counts)
    present = union > 0
    iou = np.zeros(cm.num_classes)
    iou[present] = tp[present] / union[present]
    miou = float(iou[present].mean()) if present.any() else 0.0
    return iou, miou
