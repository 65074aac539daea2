"""Brute-force reference implementations of every metric.

These deliberately avoid the vectorized paths: per-pixel Python loops for
the confusion tally, exhaustive enumeration of assignment orders for box
matching, and a naive per-recall-point scan for interpolated AP. They are
only practical on small instances and exist to cross-check the streaming
implementations (also reachable from the CLI via --oracle).
"""

from __future__ import annotations

import itertools

import numpy as np

from ..errors import GeopretrainError
from .boxes import box_iou

ORACLE_MAX_BOXES = 8


def tally_confusion(gt_map, pred_map, num_classes: int) -> list[list[int]]:
    """Per-pixel confusion counts via an explicit Python loop."""
    gt = np.asarray(gt_map).ravel().tolist()
    pred = np.asarray(pred_map).ravel().tolist()
    counts = [[0] * num_classes for _ in range(num_classes)]
    for g, p in zip(gt, pred):
        counts[g][p] += 1
    return counts


def pixel_metrics_from_tally(counts) -> dict:
    """PA (overall & macro), per-class f1 & macro, per-class IoU & mean.

    Plain-Python ratios from an integer tally; same conventions as the
    streaming path (0/0 classes drop out of macro averages).
    """
    k = len(counts)
    total = sum(sum(row) for row in counts)
    if total == 0:
        raise GeopretrainError("empty tally")
    diag = [counts[i][i] for i in range(k)]
    row_sums = [sum(counts[i]) for i in range(k)]
    col_sums = [sum(counts[i][j] for i in range(k)) for j in range(k)]

    overall = sum(diag) / total
    recalls = {i: diag[i] / row_sums[i] for i in range(k) if row_sums[i]}
    macro_pa = sum(recalls.values()) / len(recalls)

    f1 = []
    for i in range(k):
        p = diag[i] / col_sums[i] if col_sums[i] else 0.0
        r = diag[i] / row_sums[i] if row_sums[i] else 0.0
        f1.append(2 * p * r / (p + r) if p + r else 0.0)
    macro_f1 = (sum(f1[i] for i in range(k) if row_sums[i]) /
                sum(1 for i in range(k) if row_sums[i]))

    iou, present = [], []
    for i in range(k):
        union = row_sums[i] + col_sums[i] - diag[i]
        iou.append(diag[i] / union if union else 0.0)
        present.append(union > 0)
    miou = sum(v for v, pr in zip(iou, present) if pr) / sum(present)

    return {"pa_overall": overall, "pa_macro": macro_pa,
            "f1": f1, "f1_macro": macro_f1, "iou": iou, "miou": miou}


def exhaustive_match(pred_boxes, pred_scores, gt_boxes, iou_threshold: float):
    """All assignment orders, keeping the lexicographically best IoU vector.

    Predictions are taken in the convention's order (descending score,
    then descending best IoU, then input order); each must claim some
    still-free ground truth at or above the threshold when one exists.
    Returns the matched gt index per prediction in that order.
    """
    n_pred, n_gt = len(pred_boxes), len(gt_boxes)
    if n_pred > ORACLE_MAX_BOXES or n_gt > ORACLE_MAX_BOXES:
        raise GeopretrainError(
            f"oracle limited to {ORACLE_MAX_BOXES} boxes per image/class")
    ious = [[box_iou(p, g) for g in gt_boxes] for p in pred_boxes]
    best = [max(row) if row else 0.0 for row in ious]
    order = sorted(range(n_pred),
                   key=lambda i: (-float(pred_scores[i]), -best[i], i))

    best_vector: tuple | None = None
    best_assign: tuple | None = None
    # -1 (unmatched) is always enumerable; the lexicographic maximum never
    # leaves a prediction unmatched while a free candidate remains.
    candidates = [
        [g for g in range(n_gt) if ious[p][g] >= iou_threshold] + [-1]
        for p in order
    ]
    for assign in itertools.product(*candidates):
        used = [g for g in assign if g >= 0]
        if len(set(used)) != len(used):
            continue
        vector = tuple(ious[p][g] if g >= 0 else -1.0
                       for p, g in zip(order, assign))
        if best_vector is None or vector > best_vector:
            best_vector = vector
            best_assign = assign
    return order, list(best_assign or ())


def naive_interpolated_ap(recalls, precisions) -> float:
    """Mean of best precision at recall >= r over 101 recall points."""
    total = 0.0
    for i in range(101):
        r = i / 100
        candidates = [p for rec, p in zip(recalls, precisions) if rec >= r - 1e-12]
        total += max(candidates) if candidates else 0.0
    return total / 101


def oracle_average_precision(preds, gts, num_classes: int,
                             iou_threshold: float = 0.5) -> dict:
    """Reference AP (no size buckets) via exhaustive matching per image/class."""
    gt_by_id = {r.image_id: r for r in gts}
    rows: list[list[tuple[float, bool]]] = [[] for _ in range(num_classes)]
    n_gt = [0] * num_classes

    for gt in gts:
        for label in gt.labels:
            n_gt[int(label)] += 1

    for pred in preds:
        gt = gt_by_id.get(pred.image_id)
        for k in range(num_classes):
            p_idx = [i for i in range(len(pred.labels)) if pred.labels[i] == k]
            if not p_idx:
                continue
            g_boxes = ([gt.boxes[i] for i in range(len(gt.labels)) if gt.labels[i] == k]
                       if gt is not None else [])
            order, assign = exhaustive_match(
                [pred.boxes[i] for i in p_idx],
                [pred.scores[i] for i in p_idx],
                g_boxes, iou_threshold)
            for pos, g in zip(order, assign):
                rows[k].append((float(pred.scores[p_idx[pos]]), g >= 0))

    per_class = [0.0] * num_classes
    for k in range(num_classes):
        if n_gt[k] == 0:
            continue
        ordered = sorted(rows[k], key=lambda t: -t[0])
        tp = fp = 0
        recalls, precisions = [], []
        for _, hit in ordered:
            tp, fp = tp + hit, fp + (not hit)
            recalls.append(tp / n_gt[k])
            precisions.append(tp / (tp + fp))
        per_class[k] = naive_interpolated_ap(recalls, precisions)

    present = [k for k in range(num_classes) if n_gt[k] > 0]
    aggregate = sum(per_class[k] for k in present) / len(present) if present else 0.0
    return {"aggregate": aggregate, "per_class": per_class}
