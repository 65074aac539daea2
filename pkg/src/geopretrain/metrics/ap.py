"""COCO-convention average precision with greedy score-ordered matching.

Matching runs per image and class: predictions in descending score order
each claim the unmatched ground-truth box of highest IoU at or above the
threshold. AP is the 101-point interpolated area under the resulting
precision-recall sweep; the headline AP averages thresholds 0.50:0.05:0.95.
Size buckets ignore ground truths (and their matches) outside an area
range rather than counting them against the model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import GeopretrainError
from .boxes import box_iou_matrix

COCO_THRESHOLDS = tuple(np.round(np.arange(0.50, 0.96, 0.05), 2).tolist())
RECALL_POINTS = np.linspace(0.0, 1.0, 101)

# Standard object-area buckets in squared pixels.
SIZE_BUCKETS = {
    "small": (0.0, 32.0 ** 2),
    "medium": (32.0 ** 2, 96.0 ** 2),
    "large": (96.0 ** 2, float("inf")),
    None: (0.0, float("inf")),
}


@dataclass
class APResult:
    """Per-class and aggregate AP for one threshold/bucket setting."""

    iou_threshold: float
    size_bucket: str | None
    per_class: np.ndarray          # AP per class; 0 where undefined
    class_present: np.ndarray      # bool, class has >=1 counted gt box
    aggregate: float
    pr_points: dict = field(default_factory=dict)  # class -> (recalls, precisions)


def _box_areas(boxes: np.ndarray) -> np.ndarray:
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    return (boxes[:, 2] - boxes[:, 0]).clip(min=0) * (boxes[:, 3] - boxes[:, 1]).clip(min=0)


def _prediction_order(scores: np.ndarray, best_iou: np.ndarray) -> np.ndarray:
    """Descending score; ties by descending best-available IoU, then input order."""
    keys = list(zip(-scores, -best_iou, range(len(scores))))
    return np.asarray(sorted(range(len(scores)), key=lambda i: keys[i]), dtype=np.int64)


def match_image_class(pred_boxes, pred_scores, gt_boxes, gt_ignore, iou_threshold):
    """Greedy matching for one image and class.

    gt_ignore flags boxes outside the active size bucket; they can absorb
    predictions (which are then ignored) but never count as hits or misses.
    Returns (order, matched_gt, tp, ignored) arrays aligned with the
    score-sorted prediction order.
    """
    pred_boxes = np.asarray(pred_boxes, dtype=np.float64).reshape(-1, 4)
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    gt_ignore = np.asarray(gt_ignore, dtype=bool).reshape(-1)
    n_pred, n_gt = len(pred_boxes), len(gt_boxes)

    ious = box_iou_matrix(pred_boxes, gt_boxes) if n_pred and n_gt else np.zeros((n_pred, n_gt))
    best_iou = ious.max(axis=1) if n_gt else np.zeros(n_pred)
    order = _prediction_order(np.asarray(pred_scores, dtype=np.float64), best_iou)

    # Consider real ground truths before ignorable ones.
    gt_order = sorted(range(n_gt), key=lambda g: (gt_ignore[g], g))
    taken = np.zeros(n_gt, dtype=bool)
    matched_gt = np.full(n_pred, -1, dtype=np.int64)
    for p in order:
        best_g, best = -1, iou_threshold
        for g in gt_order:
            if taken[g]:
                continue
            if best_g != -1 and not gt_ignore[best_g] and gt_ignore[g]:
                break
            if ious[p, g] >= best and (best_g == -1 or ious[p, g] > best):
                best, best_g = ious[p, g], g
        if best_g != -1:
            taken[best_g] = True
            matched_gt[p] = best_g

    ordered_match = matched_gt[order]
    tp = (ordered_match >= 0) & ~gt_ignore[ordered_match.clip(min=0)] if n_gt else np.zeros(len(order), dtype=bool)
    ignored = (ordered_match >= 0) & gt_ignore[ordered_match.clip(min=0)] if n_gt else np.zeros(len(order), dtype=bool)
    return order, ordered_match, tp, ignored


def interpolated_ap(recalls: np.ndarray, precisions: np.ndarray) -> float:
    """101-point interpolated area: mean of max precision at recall >= r."""
    if len(recalls) == 0:
        return 0.0
    # Right-to-left running max turns the raw sweep into the envelope.
    envelope = np.maximum.accumulate(precisions[::-1])[::-1]
    idx = np.searchsorted(recalls, RECALL_POINTS, side="left")
    sampled = np.where(idx < len(recalls), envelope[idx.clip(max=len(recalls) - 1)], 0.0)
    return float(sampled.mean())


def average_precision(preds, gts, num_classes: int, iou_threshold: float = 0.5,
                      size_bucket: str | None = None) -> APResult:
    """Evaluate prediction records against ground-truth records.

    preds and gts are sequences of DetectionRecord; predictions must carry
    scores. Classes absent from the (bucket-filtered) ground truth are
    flagged not-present and excluded from the aggregate.
    """
    if size_bucket not in SIZE_BUCKETS:
        raise GeopretrainError(f"unknown size bucket {size_bucket!r}")
    lo, hi = SIZE_BUCKETS[size_bucket]

    gt_by_id = {r.image_id: r for r in gts}
    if len(gt_by_id) != len(gts):
        raise GeopretrainError("duplicate image_id in ground truth records")

    # Per class: prediction (score, tp, ignored) triples and counted-gt totals.
    collected: list[list[tuple[float, bool, bool]]] = [[] for _ in range(num_classes)]
    n_gt = np.zeros(num_classes, dtype=np.int64)

    for gt in gts:
        if len(gt.labels) and gt.labels.max() >= num_classes:
            raise GeopretrainError(f"{gt.image_id}: gt label out of range")
        areas = _box_areas(gt.boxes)
        counted = (areas >= lo) & (areas < hi)
        for k in range(num_classes):
            n_gt[k] += int((counted & (gt.labels == k)).sum())

    for pred in preds:
        if pred.scores is None:
            raise GeopretrainError(f"{pred.image_id}: predictions must carry scores")
        if len(pred.labels) and pred.labels.max() >= num_classes:
            raise GeopretrainError(f"{pred.image_id}: prediction label out of range")
        gt = gt_by_id.get(pred.image_id)
        gt_boxes = gt.boxes if gt is not None else np.zeros((0, 4))
        gt_labels = gt.labels if gt is not None else np.zeros(0, dtype=np.int64)
        gt_areas = _box_areas(gt_boxes)
        gt_out_of_bucket = ~((gt_areas >= lo) & (gt_areas < hi))
        pred_areas = _box_areas(pred.boxes)
        for k in range(num_classes):
            p_idx = np.nonzero(pred.labels == k)[0]
            g_idx = np.nonzero(gt_labels == k)[0]
            if len(p_idx) == 0:
                continue
            order, _, tp, ignored = match_image_class(
                pred.boxes[p_idx], pred.scores[p_idx],
                gt_boxes[g_idx], gt_out_of_bucket[g_idx], iou_threshold)
            areas_sorted = pred_areas[p_idx][order]
            out = ~((areas_sorted >= lo) & (areas_sorted < hi))
            # Unmatched predictions outside the bucket are ignored, not FPs.
            ignored = ignored | (~tp & out)
            scores_sorted = pred.scores[p_idx][order]
            collected[k].extend(zip(scores_sorted.tolist(), tp.tolist(), ignored.tolist()))

    per_class = np.zeros(num_classes)
    pr_points: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    present = n_gt > 0
    for k in range(num_classes):
        if not present[k]:
            continue
        rows = sorted(collected[k], key=lambda t: -t[0])
        kept = [(tp_, ig) for _, tp_, ig in rows if not ig]
        if not kept:
            per_class[k] = 0.0
            pr_points[k] = (np.zeros(0), np.zeros(0))
            continue
        tps = np.cumsum([tp_ for tp_, _ in kept])
        fps = np.cumsum([not tp_ for tp_, _ in kept])
        recalls = tps / n_gt[k]
        precisions = tps / (tps + fps)
        per_class[k] = interpolated_ap(recalls, precisions)
        pr_points[k] = (recalls, precisions)

    aggregate = float(per_class[present].mean()) if present.any() else 0.0
    return APResult(iou_threshold=iou_threshold, size_bucket=size_bucket,
                    per_class=per_class, class_present=present,
                    aggregate=aggregate, pr_points=pr_points)


def ap_table(preds, gts, num_classes: int) -> dict:
    """The full COCO-style metric family: AP, AP50, AP75, APs, APm, APl.

    Also reports per-class AP (threshold-averaged, all areas).
    """
    def mean_over_thresholds(bucket):
        results = [average_precision(preds, gts, num_classes, t, bucket)
                   for t in COCO_THRESHOLDS]
        present = results[0].class_present
        per_class = np.mean([r.per_class for r in results], axis=0)
        agg = float(per_class[present].mean()) if present.any() else 0.0
        return agg, per_class, present

    ap, per_class, present = mean_over_thresholds(None)
    table = {
        "AP": ap,
        "AP50": average_precision(preds, gts, num_classes, 0.50).aggregate,
        "AP75": average_precision(preds, gts, num_classes, 0.75).aggregate,
        "APs": mean_over_thresholds("small")[0],
        "APm": mean_over_thresholds("medium")[0],
        "APl": mean_over_thresholds("large")[0],
        "per_class": per_class,
        "class_present": present,
    }
    return table
