"""Dataset ingestion: classification folders, color-coded masks, box annotations."""

from .classification import ClassificationDataset, load_classification_folder
from .detection import (
    DetectionRecord,
    DetectionSet,
    annotation_class_stats,
    load_detection_annotations,
    save_detection_predictions,
)
from .masks import (
    DEEPGLOBE_TABLE,
    ColorCodeTable,
    decode_mask,
    decode_mask_lenient,
    encode_mask,
    load_color_table,
)
from .profiling import imbalance_flag, resolution_profile
from .segmentation import (
    SegmentationDataset,
    SegmentationPair,
    class_pixel_stats,
    load_segmentation_folder,
)
from .splits import SplitSpec, deterministic_split, explicit_split

__all__ = [
    "ClassificationDataset",
    "ColorCodeTable",
    "DEEPGLOBE_TABLE",
    "DetectionRecord",
    "DetectionSet",
    "SegmentationDataset",
    "SegmentationPair",
    "SplitSpec",
    "annotation_class_stats",
    "class_pixel_stats",
    "decode_mask",
    "decode_mask_lenient",
    "deterministic_split",
    "encode_mask",
    "explicit_split",
    "imbalance_flag",
    "load_classification_folder",
    "load_color_table",
    "load_detection_annotations",
    "load_segmentation_folder",
    "resolution_profile",
    "save_detection_predictions",
]
