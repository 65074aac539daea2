"""Box-annotated detection datasets and their JSON interchange format.

On disk, boxes are [x, y, width, height] per the COCO-style annotation
schema; in memory they are corner-form (x_min, y_min, x_max, y_max)
float arrays clipped to image bounds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DatasetError


@dataclass
class DetectionRecord:
    """Boxes and labels for one image; scores present iff predictions."""

    image_id: str
    width: int
    height: int
    boxes: np.ndarray             # N x 4 float64, corner form
    labels: np.ndarray            # N int64 class indices
    scores: np.ndarray | None = None
    file_name: str = ""

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if len(self.boxes) != len(self.labels):
            raise DatasetError(f"{self.image_id}: {len(self.boxes)} boxes vs "
                               f"{len(self.labels)} labels")
        if self.scores is not None:
            self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
            if len(self.scores) != len(self.boxes):
                raise DatasetError(f"{self.image_id}: scores length mismatch")
            if len(self.scores) and (self.scores.min() < 0 or self.scores.max() > 1):
                raise DatasetError(f"{self.image_id}: scores must lie in [0,1]")
        if len(self.boxes):
            self.boxes[:, 0::2] = self.boxes[:, 0::2].clip(0, self.width)
            self.boxes[:, 1::2] = self.boxes[:, 1::2].clip(0, self.height)
            degenerate = (self.boxes[:, 0] >= self.boxes[:, 2]) | (
                self.boxes[:, 1] >= self.boxes[:, 3])
            if degenerate.any():
                i = int(np.nonzero(degenerate)[0][0])
                raise DatasetError(
                    f"{self.image_id}: box {self.boxes[i].tolist()} is degenerate "
                    "after clipping to image bounds"
                )

    @property
    def is_prediction(self) -> bool:
        return self.scores is not None


@dataclass
class DetectionSet:
    records: list[DetectionRecord]
    class_names: list[str]
    rejects: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)


def load_detection_annotations(path: str | Path) -> DetectionSet:
    """Load one split's annotation JSON into corner-form records.

    Schema: {"images": [{"id","file_name","width","height"}],
             "annotations": [{"image_id","bbox":[x,y,w,h],"category_id"}
                             (+ "score" for predictions)],
             "categories": [{"id","name"}]}
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"annotation file {path} does not exist")
    doc = json.loads(path.read_text())
    for key in ("images", "annotations", "categories"):
        if key not in doc:
            raise DatasetError(f"{path}: missing {key!r} section")

    categories = sorted(doc["categories"], key=lambda c: int(c["id"]))
    cat_to_index = {int(c["id"]): i for i, c in enumerate(categories)}
    class_names = [str(c["name"]) for c in categories]

    by_image: dict = {str(im["id"]): [] for im in doc["images"]}
    has_scores = any("score" in a for a in doc["annotations"])
    for ann in doc["annotations"]:
        image_id = str(ann["image_id"])
        if image_id not in by_image:
            raise DatasetError(f"{path}: annotation references unknown image {image_id!r}")
        cat = int(ann["category_id"])
        if cat not in cat_to_index:
            raise DatasetError(f"{path}: annotation references unknown category {cat}")
        if has_scores and "score" not in ann:
            raise DatasetError(f"{path}: mixed scored and unscored annotations")
        by_image[image_id].append(ann)

    records = []
    for im in sorted(doc["images"], key=lambda im: str(im["id"])):
        image_id = str(im["id"])
        anns = by_image[image_id]
        boxes = np.array(
            [[a["bbox"][0], a["bbox"][1],
              a["bbox"][0] + a["bbox"][2], a["bbox"][1] + a["bbox"][3]]
             for a in anns], dtype=np.float64).reshape(-1, 4)
        labels = np.array([cat_to_index[int(a["category_id"])] for a in anns],
                          dtype=np.int64)
        scores = (np.array([float(a["score"]) for a in anns], dtype=np.float64)
                  if has_scores else None)
        records.append(DetectionRecord(
            image_id=image_id,
            width=int(im["width"]),
            height=int(im["height"]),
            boxes=boxes,
            labels=labels,
            scores=scores,
            file_name=str(im.get("file_name", "")),
        ))
    return DetectionSet(records=records, class_names=class_names)


def save_detection_predictions(records, class_names, path: str | Path) -> None:
    """Serialize prediction records back to the annotation JSON schema."""
    images, annotations = [], []
    ann_id = 1
    for rec in records:
        images.append({"id": rec.image_id, "file_name": rec.file_name,
                       "width": rec.width, "height": rec.height})
        scores = rec.scores if rec.scores is not None else [1.0] * len(rec.boxes)
        for box, label, score in zip(rec.boxes, rec.labels, scores):
            x0, y0, x1, y1 = (float(v) for v in box)
            annotations.append({
                "id": ann_id,
                "image_id": rec.image_id,
                "bbox": [x0, y0, x1 - x0, y1 - y0],
                "category_id": int(label),
                "score": float(score),
            })
            ann_id += 1
    doc = {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": i, "name": n} for i, n in enumerate(class_names)],
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def annotation_class_stats(records, num_classes: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-class box counts and percentages over a list of records."""
    counts = np.zeros(num_classes, dtype=np.int64)
    for rec in records:
        if len(rec.labels) and (rec.labels.min() < 0 or rec.labels.max() >= num_classes):
            raise DatasetError(f"{rec.image_id}: label out of range")
        counts += np.bincount(rec.labels, minlength=num_classes)
    total = int(counts.sum())
    percentages = 100.0 * counts / total if total else np.zeros(num_classes)
    return counts, percentages
