"""Evaluation math: pixel metrics, box IoU, and the AP family."""

from .ap import (
    APResult,
    COCO_THRESHOLDS,
    SIZE_BUCKETS,
    ap_table,
    average_precision,
    interpolated_ap,
    match_image_class,
)
from .boxes import box_area, box_iou, box_iou_matrix
from .confusion import (
    ConfusionMatrix,
    PrecisionRecall,
    f1_score,
    mean_iou,
    pixel_accuracy,
    precision_recall,
)
from .oracle import (
    exhaustive_match,
    oracle_average_precision,
    pixel_metrics_from_tally,
    tally_confusion,
)

__all__ = [
    "APResult",
    "COCO_THRESHOLDS",
    "ConfusionMatrix",
    "PrecisionRecall",
    "SIZE_BUCKETS",
    "ap_table",
    "average_precision",
    "box_area",
    "box_iou",
    "box_iou_matrix",
    "exhaustive_match",
    "f1_score",
    "interpolated_ap",
    "match_image_class",
    "mean_iou",
    "oracle_average_precision",
    "pixel_accuracy",
    "pixel_metrics_from_tally",
    "precision_recall",
    "tally_confusion",
]
