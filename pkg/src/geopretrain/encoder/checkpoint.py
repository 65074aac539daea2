"""Checkpoint archive format and torch bridging.

A checkpoint is a zip archive holding a JSON metadata block plus one raw
little-endian buffer per named array. Every array is integrity-checked on
load, saves are write-temp-then-rename atomic, and the parent_checksum
field chains each checkpoint back to the generalist weights it came from.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import zipfile
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from ..augment import IMAGENET_MEAN, IMAGENET_STD
from ..errors import CheckpointError
from .backbone import BackboneSpec, ResNetBackbone, build_backbone, spec_from_arrays

FORMAT_VERSION = 1
ALLOWED_METHODS = ("generalist", "supervised", "simsiam", "segmentation", "detection")
ALLOWED_NAMESPACES = ("backbone.", "head.", "projector.", "predictor.",
                      "det_backbone.", "fpn.")
# Fixed timestamp keeps archives byte-identical across reruns.
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


@dataclass(frozen=True)
class CheckpointMeta:
    method: str
    dataset: str = ""
    epochs: int = 0
    normalization: tuple = (IMAGENET_MEAN, IMAGENET_STD)
    parent_checksum: str | None = None

    def __post_init__(self):
        if self.method not in ALLOWED_METHODS:
            raise CheckpointError(
                f"unknown checkpoint method {self.method!r}; "
                f"expected one of {ALLOWED_METHODS}")


@dataclass
class Checkpoint:
    arrays: dict[str, np.ndarray]
    meta: CheckpointMeta
    # sha256 of the file this checkpoint was loaded from, if any.
    source_checksum: str | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in self.arrays:
            if not name.startswith(ALLOWED_NAMESPACES):
                raise CheckpointError(
                    f"array key {name!r} outside the allowed namespaces "
                    f"{ALLOWED_NAMESPACES}")

    def namespace(self, prefix: str) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.arrays.items() if k.startswith(prefix)}

    def with_meta(self, **changes) -> "Checkpoint":
        return Checkpoint(self.arrays, replace(self.meta, **changes),
                          self.source_checksum)


def file_checksum(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _array_bytes(arr: np.ndarray) -> tuple[bytes, str]:
    arr = np.ascontiguousarray(arr)
    if arr.dtype.byteorder == ">":
        arr = arr.astype(arr.dtype.newbyteorder("<"))
    return arr.tobytes(), arr.dtype.str


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> str:
    """Write atomically; returns the file's sha256 for provenance chaining."""
    path = Path(path)
    index = {}
    buffers = {}
    for name in sorted(ckpt.arrays):
        data, dtype = _array_bytes(ckpt.arrays[name])
        index[name] = {
            "dtype": dtype,
            "shape": list(ckpt.arrays[name].shape),
            "sha256": hashlib.sha256(data).hexdigest(),
        }
        buffers[name] = data
    meta_doc = {
        "format_version": FORMAT_VERSION,
        "method": ckpt.meta.method,
        "dataset": ckpt.meta.dataset,
        "epochs": ckpt.meta.epochs,
        "normalization": [list(ckpt.meta.normalization[0]),
                          list(ckpt.meta.normalization[1])],
        "parent_checksum": ckpt.meta.parent_checksum,
        "arrays": index,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            with zipfile.ZipFile(handle, "w", zipfile.ZIP_STORED) as zf:
                zf.writestr(zipfile.ZipInfo("meta.json", _ZIP_DATE),
                            json.dumps(meta_doc, indent=1, sort_keys=True))
                for name in sorted(buffers):
                    zf.writestr(zipfile.ZipInfo(f"arrays/{name}", _ZIP_DATE),
                                buffers[name])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return file_checksum(path)


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint {path} does not exist")
    try:
        with zipfile.ZipFile(path) as zf:
            meta_doc = json.loads(zf.read("meta.json"))
            version = meta_doc.get("format_version")
            if version != FORMAT_VERSION:
                raise CheckpointError(
                    f"{path}: unsupported checkpoint format version {version!r}")
            arrays = {}
            for name, entry in meta_doc["arrays"].items():
                data = zf.read(f"arrays/{name}")
                digest = hashlib.sha256(data).hexdigest()
                if digest != entry["sha256"]:
                    raise CheckpointError(f"{path}: checksum mismatch for array {name!r}")
                arr = np.frombuffer(data, dtype=np.dtype(entry["dtype"]))
                arrays[name] = arr.reshape(tuple(entry["shape"])).copy()
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from exc
    norm = meta_doc.get("normalization") or [IMAGENET_MEAN, IMAGENET_STD]
    meta = CheckpointMeta(
        method=meta_doc["method"],
        dataset=meta_doc.get("dataset", ""),
        epochs=int(meta_doc.get("epochs", 0)),
        normalization=(tuple(norm[0]), tuple(norm[1])),
        parent_checksum=meta_doc.get("parent_checksum"),
    )
    return Checkpoint(arrays=arrays, meta=meta, source_checksum=file_checksum(path))


def arrays_from_module(module: torch.nn.Module, prefix: str) -> dict[str, np.ndarray]:
    """state_dict -> namespaced numpy arrays (bit-exact copies)."""
    out = {}
    for key, tensor in module.state_dict().items():
        out[prefix + key] = tensor.detach().cpu().numpy().copy()
    return out


def load_arrays_into_module(module: torch.nn.Module, arrays: dict[str, np.ndarray],
                            prefix: str) -> None:
    """Load namespaced arrays back into a module, requiring full coverage."""
    state = {}
    for key, tensor in module.state_dict().items():
        name = prefix + key
        if name not in arrays:
            raise CheckpointError(f"missing array {name!r} for module load")
        arr = arrays[name]
        if tuple(arr.shape) != tuple(tensor.shape):
            raise CheckpointError(
                f"shape conflict for {name!r}: checkpoint {tuple(arr.shape)} "
                f"vs module {tuple(tensor.shape)}")
        state[key] = torch.from_numpy(np.ascontiguousarray(arr))
    module.load_state_dict(state)


def backbone_from_checkpoint(ckpt: Checkpoint, namespace: str = "backbone.") -> ResNetBackbone:
    """Rebuild the backbone module a checkpoint describes and load its weights."""
    spec = spec_from_arrays(ckpt.arrays, namespace)
    model = ResNetBackbone(spec)
    load_arrays_into_module(model, ckpt.arrays, namespace)
    return model


def fresh_generalist(spec: BackboneSpec, seed: int = 0,
                     dataset: str = "random-init") -> Checkpoint:
    """Randomly initialized stand-in for real generalist weights.

    Useful for tests and smoke runs; real pipelines should convert actual
    pre-trained weights via generalist_from_torchvision.
    """
    model = build_backbone(spec, seed=seed)
    return Checkpoint(
        arrays=arrays_from_module(model, "backbone."),
        meta=CheckpointMeta(method="generalist", dataset=dataset),
    )


def generalist_from_torchvision(state_dict) -> Checkpoint:
    """Convert a torchvision resnet50 state_dict into a generalist checkpoint."""
    arrays = {}
    for key, tensor in state_dict.items():
        if key.startswith("fc."):
            continue
        name = key
        if name.startswith("conv1."):
            name = name.replace("conv1.", "stem.conv.", 1)
        elif name.startswith("bn1."):
            name = name.replace("bn1.", "stem.bn.", 1)
        elif name.startswith("layer"):
            name = "stage" + name[len("layer"):]
        arrays["backbone." + name] = tensor.detach().cpu().numpy().copy()
    spec = spec_from_arrays(arrays)
    if spec.variant != "resnet50":
        raise CheckpointError("state_dict does not look like a resnet50")
    return Checkpoint(arrays=arrays,
                      meta=CheckpointMeta(method="generalist", dataset="imagenet"))
