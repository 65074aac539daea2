"""Paired image/color-mask segmentation datasets (DeepGlobe layout)."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import DatasetError
from .masks import ColorCodeTable, DEEPGLOBE_TABLE, decode_mask, decode_mask_lenient


@dataclass
class SegmentationPair:
    """An RGB image with its per-pixel class-index map."""

    image: np.ndarray  # HxWx3 uint8
    mask: np.ndarray   # HxW int64
    source_id: str

    def __post_init__(self):
        if self.image.shape[:2] != self.mask.shape:
            raise DatasetError(
                f"{self.source_id}: image {self.image.shape[:2]} and mask "
                f"{self.mask.shape} spatial dims differ"
            )


@dataclass
class SegmentationDataset:
    """Lazily decoded paired files <id>_sat.{jpg,png} + <id>_mask.png."""

    root: Path
    ids: list[str]
    image_paths: list[Path]
    mask_paths: list[Path]
    table: ColorCodeTable = DEEPGLOBE_TABLE
    lenient_colors: bool = False

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def num_classes(self) -> int:
        return len(self.table)

    def load_pair(self, index: int) -> SegmentationPair:
        with Image.open(self.image_paths[index]) as img:
            image = np.asarray(img.convert("RGB"))
        mask = self.load_mask(index)
        return SegmentationPair(image=image, mask=mask, source_id=self.ids[index])

    def load_mask(self, index: int) -> np.ndarray:
        cached = self._cache_path(index)
        if cached is not None and cached.exists():
            return np.load(cached)
        with Image.open(self.mask_paths[index]) as img:
            rgb = np.asarray(img.convert("RGB"))
        if self.lenient_colors:
            mask, _ = decode_mask_lenient(rgb, self.table)
        else:
            mask = decode_mask(rgb, self.table)
        if cached is not None:
            tmp = cached.with_suffix(".tmp.npy")
            np.save(tmp, mask)
            os.replace(tmp, cached)
        return mask

    def _cache_path(self, index: int) -> Path | None:
        cache_root = os.environ.get("GEOPRETRAIN_CACHE")
        if not cache_root:
            return None
        d = Path(cache_root) / "masks" / self.root.name
        d.mkdir(parents=True, exist_ok=True)
        return d / f"{self.ids[index]}.npy"


def load_segmentation_folder(
    root: str | Path,
    table: ColorCodeTable = DEEPGLOBE_TABLE,
    lenient_colors: bool = False,
) -> SegmentationDataset:
    """Pair up *_sat.{jpg,png} images with *_mask.png color masks under root."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} does not exist")
    images: dict[str, Path] = {}
    masks: dict[str, Path] = {}
    for path in sorted(root.iterdir()):
        if not path.is_file():
            continue
        stem = path.name
        if stem.endswith(("_sat.jpg", "_sat.png")):
            images[stem.rsplit("_sat", 1)[0]] = path
        elif stem.endswith("_mask.png"):
            masks[stem.rsplit("_mask", 1)[0]] = path
    ids = sorted(images.keys() & masks.keys())
    if not ids:
        raise DatasetError(f"no <id>_sat.* / <id>_mask.png pairs found under {root}")
    unpaired = sorted((images.keys() | masks.keys()) - set(ids))
    if unpaired:
        raise DatasetError(f"unpaired segmentation files under {root}: {unpaired[:5]}")
    return SegmentationDataset(
        root=root,
        ids=ids,
        image_paths=[images[i] for i in ids],
        mask_paths=[masks[i] for i in ids],
        table=table,
        lenient_colors=lenient_colors,
    )


def class_pixel_stats(masks, num_classes: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact per-class pixel counts and proportions over an iterable of masks.

    Accepts any iterable of HxW class-index maps (a SegmentationDataset
    works via its lazy mask loader). Counts are exact integers;
    proportions sum to 1.
    """
    if isinstance(masks, SegmentationDataset):
        dataset = masks
        num_classes = dataset.num_classes
        masks = (dataset.load_mask(i) for i in range(len(dataset)))
    counts = np.zeros(num_classes, dtype=np.int64)
    total = 0
    for mask in masks:
        mask = np.asarray(mask)
        counts += np.bincount(mask.ravel(), minlength=num_classes)
        total += mask.size
    if total == 0:
        raise DatasetError("no pixels observed")
    return counts, counts / total
