"""Run configuration: TOML loading, defaults, validation, resolution.

One TOML document per run with [dataset] [model] [train] [eval] sections.
Validation failures raise ConfigError naming the offending field; the
fully resolved config (defaults expanded) is what lands in the manifest.
"""

from __future__ import annotations

import copy
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - version specific
    import tomli as tomllib

from ..augment import AugmentSpec
from ..errors import ConfigError

CONFIG_FORMAT_VERSION = 1

# Full key space with defaults. None means "no default, may be required
# by a command"; values define both the default and the expected type.
DEFAULTS: dict = {
    "format_version": CONFIG_FORMAT_VERSION,
    "seed": 0,
    "dataset": {
        "kind": "",                 # classification | segmentation | detection
        "root": "",
        "name": "",
        "train_fraction": 0.8,
        "eval_list": "",
        "lenient_colors": False,
        "color_table": "",
        "train_annotations": "",
        "eval_annotations": "",
        "predictions": "",
        "image_root": "",
        "resolution_range": [],
    },
    "model": {
        "backbone": "resnet50",
        "num_classes": 7,
        "aspp_rates": [3, 6, 9],
        "aspp_channels": 256,
        "classifier_channels": 256,
        "slim": False,
        "proj_hidden": 2048,
        "proj_dim": 2048,
        "pred_hidden": 512,
        "lateral_channels": 256,
    },
    "train": {
        "mode": "",                 # pretrain: supervised | simsiam
        "generalist": "",
        "backbone_checkpoint": "",
        "backend": "torchvision-fasterrcnn",
        "batch_size": 0,            # 0 -> per-mode default
        "epochs": -1,               # -1 -> per-mode default
        "peak_lr": 1e-3,
        "pct_warmup": 0.3,
        "base_lr": 0.05,
        "lr": 1e-4,
        "weight_decay": -1.0,       # -1 -> per-mode default
        "momentum": 0.9,
        "milestones": [],
        "gamma": 0.1,
        "lr_scaling": True,
        "view_size": 224,
        "crop": 1024,
        "class_weighting": False,
        "iterations": 5000,
        "warmup_iterations": 500,
        "image_size": 512,
        "augment": {},
    },
    "eval": {
        "fraction": 0.1,
        "batch_size": 64,
        "split": "eval",            # eval | all
    },
}

_MODE_DEFAULTS = {
    "supervised": {"batch_size": 120, "epochs": 100, "weight_decay": 0.0},
    "simsiam": {"batch_size": 128, "epochs": 400, "weight_decay": 1e-5},
    "seg": {"batch_size": 4, "epochs": 5, "weight_decay": 1e-4},
    "det": {"batch_size": 2, "weight_decay": 1e-4},
}


def load_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML ({exc})") from exc
    return raw


def resolve_config(raw: dict, overrides: dict | None = None) -> dict:
    """Merge raw config over the defaults, rejecting unknown keys."""
    resolved = copy.deepcopy(DEFAULTS)
    _merge(resolved, raw, path="")
    if overrides:
        _merge(resolved, overrides, path="")
    version = resolved.get("format_version")
    if version != CONFIG_FORMAT_VERSION:
        raise ConfigError(f"format_version: expected {CONFIG_FORMAT_VERSION}, got {version!r}")
    _apply_mode_defaults(resolved)
    return resolved


def _merge(base: dict, extra: dict, path: str) -> None:
    for key, value in extra.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"{where}: unknown config key")
        if key == "augment":
            base[key] = value  # free-form AugmentSpec document
            continue
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}: expected a section")
            _merge(base[key], value, path=f"{where}.")
            continue
        if not _type_ok(base[key], value):
            raise ConfigError(
                f"{where}: expected {type(base[key]).__name__}, got {type(value).__name__}")
        base[key] = value


def _type_ok(default, value) -> bool:
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, list):
        return isinstance(value, list)
    return isinstance(value, type(default))


def _apply_mode_defaults(cfg: dict) -> None:
    mode = cfg["train"].get("mode", "")
    defaults = _MODE_DEFAULTS.get(mode, {})
    train = cfg["train"]
    if train["batch_size"] == 0:
        train["batch_size"] = defaults.get("batch_size", 1)
    if train["epochs"] == -1:
        train["epochs"] = defaults.get("epochs", 1)
    if train["weight_decay"] < 0:
        train["weight_decay"] = defaults.get("weight_decay", 0.0)


def require(cfg: dict, *fields: str) -> None:
    """Fail if any dotted field resolves empty."""
    for dotted in fields:
        node = cfg
        for part in dotted.split("."):
            node = node[part]
        if node in ("", [], None):
            raise ConfigError(f"{dotted}: required for this command")


def validate_positive(cfg: dict, *fields: str) -> None:
    for dotted in fields:
        node = cfg
        for part in dotted.split("."):
            node = node[part]
        if not node > 0:
            raise ConfigError(f"{dotted}: must be > 0, got {node}")


def augment_from_config(cfg: dict, seed: int) -> AugmentSpec | None:
    doc = cfg["train"].get("augment") or {}
    if not doc:
        return None
    doc = dict(doc)
    doc.setdefault("seed", seed)
    return AugmentSpec.from_dict(doc)


def dataset_name(cfg: dict) -> str:
    name = cfg["dataset"]["name"]
    if name:
        return name
    root = cfg["dataset"]["root"]
    return Path(root).name if root else "dataset"


def dump_toml(doc: dict) -> str:
    """Serialize a resolved config back to TOML for --print-config."""
    lines: list[str] = []
    _dump_table(doc, "", lines)
    return "\n".join(lines) + "\n"


def _dump_table(doc: dict, prefix: str, lines: list[str]) -> None:
    scalars = {k: v for k, v in doc.items() if not isinstance(v, dict)}
    tables = {k: v for k, v in doc.items() if isinstance(v, dict)}
    for key, value in scalars.items():
        lines.append(f"{key} = {_toml_value(value)}")
    for key, value in tables.items():
        name = f"{prefix}{key}"
        lines.append("")
        lines.append(f"[{name}]")
        _dump_table(value, f"{name}.", lines)


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        escal = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escal}"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    if isinstance(value, dict):
        inner = ", ".join(f"{k} = {_toml_value(v)}" for k, v in value.items())
        return "{" + inner + "}"
    raise ConfigError(f"cannot serialize config value {value!r}")
