"""Color-coded segmentation masks: class table, decoding and encoding.

Land-cover masks store one unique RGB color per class. Decoding maps each
pixel to its class index; encoding is the exact inverse and is used for
prediction overlays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DatasetError, MaskColorError


@dataclass(frozen=True)
class ColorCodeTable:
    """Ordered class-name/RGB pairs with one designated unknown class."""

    names: tuple[str, ...]
    colors: tuple[tuple[int, int, int], ...]
    unknown_index: int

    def __post_init__(self):
        if len(self.names) != len(self.colors):
            raise DatasetError("color table needs one color per class name")
        if len(set(self.colors)) != len(self.colors):
            raise DatasetError("color table entries must be pairwise distinct")
        if not 0 <= self.unknown_index < len(self.names):
            raise DatasetError("unknown_index out of range")
        for c in self.colors:
            if len(c) != 3 or any(not 0 <= v <= 255 for v in c):
                raise DatasetError(f"invalid rgb triple {c!r}")

    def __len__(self) -> int:
        return len(self.names)

    @property
    def palette(self) -> np.ndarray:
        """K x 3 uint8 array of class colors."""
        return np.asarray(self.colors, dtype=np.uint8)

    def index_of(self, name: str) -> int:
        return self.names.index(name)


# DeepGlobe land-cover classes in their canonical table order.
DEEPGLOBE_TABLE = ColorCodeTable(
    names=(
        "Urban_land",
        "Agriculture_land",
        "Rangeland",
        "Forest_land",
        "Water",
        "Barren_land",
        "Unknown",
    ),
    colors=(
        (0, 255, 255),
        (255, 255, 0),
        (255, 0, 255),
        (0, 255, 0),
        (0, 0, 255),
        (255, 255, 255),
        (0, 0, 0),
    ),
    unknown_index=6,
)


def load_color_table(path: str | Path) -> ColorCodeTable:
    """Load a color table from a JSON list of {"name", "rgb": [r,g,b]}.

    An entry may set "unknown": true to designate the unknown class;
    otherwise an entry named "Unknown" (case-insensitive) is used.
    """
    entries = json.loads(Path(path).read_text())
    if not isinstance(entries, list) or not entries:
        raise DatasetError(f"color table {path}: expected a non-empty JSON list")
    names, colors, unknown = [], [], None
    for i, e in enumerate(entries):
        names.append(str(e["name"]))
        colors.append(tuple(int(v) for v in e["rgb"]))
        if e.get("unknown"):
            unknown = i
    if unknown is None:
        lowered = [n.lower() for n in names]
        if "unknown" not in lowered:
            raise DatasetError(f"color table {path}: no unknown class designated")
        unknown = lowered.index("unknown")
    return ColorCodeTable(tuple(names), tuple(colors), unknown)


def _pack_rgb(rgb: np.ndarray) -> np.ndarray:
    """Pack an ...x3 uint8 array into int32 codes for exact comparison."""
    rgb = rgb.astype(np.int32)
    return (rgb[..., 0] << 16) | (rgb[..., 1] << 8) | rgb[..., 2]


def decode_mask(rgb_mask: np.ndarray, table: ColorCodeTable = DEEPGLOBE_TABLE) -> np.ndarray:
    """Map an HxWx3 color mask to an HxW class-index map.

    Matching is exact; a pixel matching no table entry raises
    MaskColorError with its coordinates and color.
    """
    index_map, unmatched = _decode(rgb_mask, table)
    if unmatched.any():
        ys, xs = np.nonzero(unmatched)
        y, x = int(ys[0]), int(xs[0])
        r, g, b = (int(v) for v in rgb_mask[y, x])
        raise MaskColorError(
            f"mask pixel at (y={y}, x={x}) has color [{r}, {g}, {b}] which matches "
            f"no color-table entry ({int(unmatched.sum())} such pixels total)"
        )
    return index_map


def decode_mask_lenient(
    rgb_mask: np.ndarray, table: ColorCodeTable = DEEPGLOBE_TABLE
) -> tuple[np.ndarray, int]:
    """Like decode_mask, but maps unmatched pixels to the unknown class.

    Returns the index map and the count of remapped pixels.
    """
    index_map, unmatched = _decode(rgb_mask, table)
    n = int(unmatched.sum())
    if n:
        index_map[unmatched] = table.unknown_index
    return index_map, n


def _decode(rgb_mask: np.ndarray, table: ColorCodeTable) -> tuple[np.ndarray, np.ndarray]:
    rgb_mask = np.asarray(rgb_mask)
    if rgb_mask.ndim != 3 or rgb_mask.shape[-1] != 3:
        raise DatasetError(f"expected HxWx3 mask, got shape {rgb_mask.shape}")
    codes = _pack_rgb(rgb_mask)
    index_map = np.zeros(codes.shape, dtype=np.int64)
    matched = np.zeros(codes.shape, dtype=bool)
    for k, color in enumerate(table.colors):
        hit = codes == _pack_rgb(np.asarray(color, dtype=np.uint8))
        index_map[hit] = k
        matched |= hit
    return index_map, ~matched


def encode_mask(index_map: np.ndarray, table: ColorCodeTable = DEEPGLOBE_TABLE) -> np.ndarray:
    """Map an HxW class-index map back to its HxWx3 color mask."""
    index_map = np.asarray(index_map)
    if index_map.min(initial=0) < 0 or index_map.max(initial=0) >= len(table):
        bad = index_map[(index_map < 0) | (index_map >= len(table))]
        raise DatasetError(
            f"class index {int(bad.flat[0])} out of range for a {len(table)}-class table"
        )
    return table.palette[index_map]
