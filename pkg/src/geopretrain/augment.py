"""Seed-deterministic image transforms and the two-view pipeline.

Geometric ops (flips, crops) are applied identically to an image and its
companion mask; photometric ops touch the image only. Every random draw
comes from a stream derived from (spec seed, worker, call index), so the
same call always produces the same output regardless of worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import cv2
import numpy as np

from .errors import ConfigError, DatasetError
from .seeding import derive_rng

# ImageNet channel statistics; the generalist checkpoint records the pair
# it was trained with and downstream stages reuse those.
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)


@dataclass(frozen=True)
class FlipH:
    p: float = 0.5


@dataclass(frozen=True)
class FlipV:
    p: float = 0.5


@dataclass(frozen=True)
class Crop:
    size: int


@dataclass(frozen=True)
class ResizedCrop:
    size: int
    scale: tuple[float, float] = (0.2, 1.0)
    ratio: tuple[float, float] = (3.0 / 4.0, 4.0 / 3.0)


@dataclass(frozen=True)
class ColorJitter:
    brightness: float = 0.4
    contrast: float = 0.4
    saturation: float = 0.4
    hue: float = 0.1
    p: float = 0.8


@dataclass(frozen=True)
class Grayscale:
    p: float = 0.2


@dataclass(frozen=True)
class Blur:
    sigma: tuple[float, float] = (0.1, 2.0)
    p: float = 0.5


_OP_TYPES = {
    "flip_h": FlipH,
    "flip_v": FlipV,
    "crop": Crop,
    "resized_crop": ResizedCrop,
    "color_jitter": ColorJitter,
    "grayscale": Grayscale,
    "blur": Blur,
}
_OP_NAMES = {v: k for k, v in _OP_TYPES.items()}


@dataclass(frozen=True)
class AugmentSpec:
    """Ordered transform descriptors plus the stream seed."""

    ops: tuple = ()
    seed: int = 0

    def __post_init__(self):
        for op in self.ops:
            if type(op) not in _OP_NAMES:
                raise ConfigError(f"unknown augmentation op {op!r}")
            p = getattr(op, "p", None)
            if p is not None and not 0.0 <= p <= 1.0:
                raise ConfigError(f"augment op probability {p} outside [0,1]")

    def to_dict(self) -> dict:
        ops = []
        for op in self.ops:
            d = {"op": _OP_NAMES[type(op)]}
            d.update(asdict(op))
            ops.append(d)
        return {"seed": self.seed, "ops": ops}

    @staticmethod
    def from_dict(doc: dict) -> "AugmentSpec":
        ops = []
        for entry in doc.get("ops", []):
            entry = dict(entry)
            name = entry.pop("op")
            if name not in _OP_TYPES:
                raise ConfigError(f"unknown augmentation op {name!r}")
            for key in ("scale", "ratio", "sigma"):
                if key in entry:
                    entry[key] = tuple(entry[key])
            ops.append(_OP_TYPES[name](**entry))
        return AugmentSpec(ops=tuple(ops), seed=int(doc.get("seed", 0)))


def ssl_default_spec(view_size: int = 224, seed: int = 0) -> AugmentSpec:
    """The two-view recipe used for contrastive pre-training."""
    return AugmentSpec(ops=(
        ResizedCrop(view_size, scale=(0.2, 1.0)),
        FlipH(0.5),
        ColorJitter(0.4, 0.4, 0.4, 0.1, p=0.8),
        Grayscale(0.2),
        Blur((0.1, 2.0), p=0.5),
    ), seed=seed)


def seg_default_spec(crop_size: int = 1024, seed: int = 0) -> AugmentSpec:
    """Segmentation fine-tuning recipe: both flips plus a random crop."""
    return AugmentSpec(ops=(
        FlipH(0.5),
        FlipV(0.5),
        Crop(crop_size),
    ), seed=seed)


def apply(spec: AugmentSpec, image: np.ndarray, companion_mask: np.ndarray | None = None,
          call_index: int = 0, worker_id: int = 0):
    """Run the pipeline on one image (and optionally its mask).

    Returns the transformed image, or an (image, mask) pair when a
    companion mask is given. Identical (spec, call_index, worker_id)
    always produce identical output.
    """
    rng = derive_rng(spec.seed, "augment", worker_id, call_index)
    return _run(spec, image, companion_mask, rng)


def two_views(spec: AugmentSpec, image: np.ndarray, call_index: int = 0,
              worker_id: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Two independent stochastic draws of the pipeline on one image."""
    v1 = _run(spec, image, None, derive_rng(spec.seed, "view", worker_id, call_index, 0))
    v2 = _run(spec, image, None, derive_rng(spec.seed, "view", worker_id, call_index, 1))
    return v1, v2


def _run(spec, image, mask, rng):
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[-1] != 3:
        raise DatasetError(f"expected HxWx3 image, got shape {image.shape}")
    if mask is not None:
        mask = np.asarray(mask)
        if mask.shape != image.shape[:2]:
            raise DatasetError("companion mask dims differ from image")
    for op in spec.ops:
        image, mask = _apply_op(op, image, mask, rng)
    if mask is None:
        return image
    return image, mask


def _apply_op(op, image, mask, rng):
    if isinstance(op, FlipH):
        if rng.random() < op.p:
            image = image[:, ::-1]
            mask = mask[:, ::-1] if mask is not None else None
    elif isinstance(op, FlipV):
        if rng.random() < op.p:
            image = image[::-1]
            mask = mask[::-1] if mask is not None else None
    elif isinstance(op, Crop):
        h, w = image.shape[:2]
        if op.size > h or op.size > w:
            raise DatasetError(f"crop size {op.size} exceeds image {h}x{w}")
        top = int(rng.integers(0, h - op.size + 1))
        left = int(rng.integers(0, w - op.size + 1))
        image = image[top:top + op.size, left:left + op.size]
        if mask is not None:
            mask = mask[top:top + op.size, left:left + op.size]
    elif isinstance(op, ResizedCrop):
        top, left, ch, cw = _sample_resized_crop(image.shape[:2], op, rng)
        image = _resize(image[top:top + ch, left:left + cw], op.size, cv2.INTER_LINEAR)
        if mask is not None:
            mask = _resize_mask(mask[top:top + ch, left:left + cw], op.size)
    elif isinstance(op, ColorJitter):
        if rng.random() < op.p:
            image = _jitter(image, op, rng)
    elif isinstance(op, Grayscale):
        if rng.random() < op.p:
            gray = (image.astype(np.float32) @ _LUMA).round().clip(0, 255).astype(np.uint8)
            image = np.repeat(gray[..., None], 3, axis=2)
    elif isinstance(op, Blur):
        if rng.random() < op.p:
            sigma = float(rng.uniform(*op.sigma))
            image = cv2.GaussianBlur(np.ascontiguousarray(image), (0, 0), sigma)
    return image, mask


def _sample_resized_crop(shape, op: ResizedCrop, rng):
    h, w = shape
    area = h * w
    log_ratio = (math.log(op.ratio[0]), math.log(op.ratio[1]))
    for _ in range(10):
        target_area = area * rng.uniform(op.scale[0], op.scale[1])
        aspect = math.exp(rng.uniform(*log_ratio))
        cw = int(round(math.sqrt(target_area * aspect)))
        ch = int(round(math.sqrt(target_area / aspect)))
        if 0 < cw <= w and 0 < ch <= h:
            top = int(rng.integers(0, h - ch + 1))
            left = int(rng.integers(0, w - cw + 1))
            return top, left, ch, cw
    # Fallback: the largest center crop with an in-range aspect ratio.
    in_ratio = w / h
    if in_ratio < op.ratio[0]:
        cw, ch = w, int(round(w / op.ratio[0]))
    elif in_ratio > op.ratio[1]:
        ch, cw = h, int(round(h * op.ratio[1]))
    else:
        cw, ch = w, h
    return (h - ch) // 2, (w - cw) // 2, ch, cw


def _resize(image, size, interpolation):
    return cv2.resize(np.ascontiguousarray(image), (size, size), interpolation=interpolation)


def _resize_mask(mask, size):
    lifted = np.ascontiguousarray(mask.astype(np.float64))
    out = cv2.resize(lifted, (size, size), interpolation=cv2.INTER_NEAREST)
    return out.astype(mask.dtype)


def _jitter(image, op: ColorJitter, rng):
    out = image.astype(np.float32)
    b = rng.uniform(max(0.0, 1 - op.brightness), 1 + op.brightness)
    out = out * b
    c = rng.uniform(max(0.0, 1 - op.contrast), 1 + op.contrast)
    mean = float((out.clip(0, 255) @ _LUMA).mean())
    out = out * c + mean * (1 - c)
    s = rng.uniform(max(0.0, 1 - op.saturation), 1 + op.saturation)
    gray = (out.clip(0, 255) @ _LUMA)[..., None]
    out = out * s + gray * (1 - s)
    out = out.round().clip(0, 255).astype(np.uint8)
    if op.hue > 0:
        delta = rng.uniform(-op.hue, op.hue)
        hsv = cv2.cvtColor(np.ascontiguousarray(out), cv2.COLOR_RGB2HSV)
        shift = np.uint8(round(delta * 180)) if delta >= 0 else np.uint8(180 + round(delta * 180))
        hsv[..., 0] = (hsv[..., 0] + shift) % 180
        out = cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB)
    return out


def to_model_input(image: np.ndarray, normalization=(IMAGENET_MEAN, IMAGENET_STD)) -> np.ndarray:
    """uint8 HxWx3 -> normalized float32 3xHxW."""
    mean, std = normalization
    arr = image.astype(np.float32) / 255.0
    arr = (arr - np.asarray(mean, dtype=np.float32)) / np.asarray(std, dtype=np.float32)
    return np.ascontiguousarray(arr.transpose(2, 0, 1))
