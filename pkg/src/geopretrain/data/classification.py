"""Folder-per-class scene classification datasets (PatternNet/Resisc45 layout)."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import DatasetError

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg"}


@dataclass
class ClassificationDataset:
    """Samples as (image_path, class_index), classes in lexicographic order."""

    root: Path
    class_names: list[str]
    samples: list[tuple[Path, int]]
    rejects: list[tuple[Path, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def load_image(self, index: int) -> np.ndarray:
        """HxWx3 uint8 array for the given sample."""
        path, _ = self.samples[index]
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))

    def class_counts(self) -> list[int]:
        counts = [0] * self.num_classes
        for _, label in self.samples:
            counts[label] += 1
        return counts


def load_classification_folder(root: str | Path, verify: bool = True) -> ClassificationDataset:
    """Scan <root>/<class_name>/<image> into a ClassificationDataset.

    Class names are the immediate subdirectory names sorted
    lexicographically; files within a class are sorted by name so the
    sample order is deterministic. Unreadable images go to the rejects
    list instead of the sample list.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} does not exist")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise DatasetError(f"dataset root {root} contains no class directories")

    class_names = [p.name for p in class_dirs]
    samples: list[tuple[Path, int]] = []
    rejects: list[tuple[Path, str]] = []
    for index, class_dir in enumerate(class_dirs):
        files = sorted(
            p for p in class_dir.iterdir()
            if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
        )
        kept = 0
        for path in files:
            if verify:
                try:
                    with Image.open(path) as img:
                        img.verify()
                except Exception as exc:  # PIL raises a mixed bag of types
                    rejects.append((path, str(exc)))
                    continue
            samples.append((path, index))
            kept += 1
        if kept == 0:
            raise DatasetError(f"class directory {class_dir.name!r} has no readable images")
    return ClassificationDataset(root=root, class_names=class_names,
                                 samples=samples, rejects=rejects)
