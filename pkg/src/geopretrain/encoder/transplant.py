"""Backbone transplantation between pipeline stages.

Copies backbone-namespaced arrays from a pre-training checkpoint into a
downstream model skeleton (segmentation, detection or another pre-training
stage). Keys match by their name below the namespace plus exact shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import TransplantError
from .checkpoint import Checkpoint

# Namespaces whose keys may receive backbone weights.
BACKBONE_NAMESPACES = ("backbone", "det_backbone")


@dataclass
class TransplantReport:
    """Partition of the target keys, plus which source keys went unused."""

    matched: list[str] = field(default_factory=list)
    newly_initialized: list[str] = field(default_factory=list)
    skipped_source: list[str] = field(default_factory=list)

    def summary(self) -> str:
        return (f"{len(self.matched)} matched, "
                f"{len(self.newly_initialized)} newly initialized, "
                f"{len(self.skipped_source)} source keys skipped")


def transplant_backbone(source: Checkpoint, target_skeleton: dict[str, np.ndarray],
                        mode: str = "strict") -> tuple[Checkpoint, TransplantReport]:
    """Fill a target skeleton's backbone keys from a source checkpoint.

    target_skeleton maps array names to their initialized values; the
    result keeps skeleton values wherever no source array matches. In
    strict mode every backbone-namespaced target key must be filled.
    """
    if mode not in ("strict", "permissive"):
        raise TransplantError(f"unknown transplant mode {mode!r}")
    source_backbone = {key.split(".", 1)[1]: key
                       for key in source.arrays if key.startswith("backbone.")}
    if not source_backbone:
        raise TransplantError("source checkpoint has no backbone.* arrays")

    consumed = set()
    report = TransplantReport()
    out: dict[str, np.ndarray] = {}
    unmatched_backbone: list[str] = []
    for key, value in target_skeleton.items():
        namespace, _, suffix = key.partition(".")
        source_key = source_backbone.get(suffix) if namespace in BACKBONE_NAMESPACES else None
        if source_key is None:
            out[key] = np.array(value, copy=True)
            report.newly_initialized.append(key)
            if namespace in BACKBONE_NAMESPACES:
                unmatched_backbone.append(key)
            continue
        src = source.arrays[source_key]
        if tuple(src.shape) != tuple(np.asarray(value).shape):
            raise TransplantError(
                f"shape conflict for {key!r}: source {tuple(src.shape)} vs "
                f"target {tuple(np.asarray(value).shape)}")
        out[key] = np.array(src, copy=True)
        report.matched.append(key)
        consumed.add(source_key)

    if mode == "strict" and unmatched_backbone:
        raise TransplantError(
            "strict transplant: no source match for backbone keys "
            f"{sorted(unmatched_backbone)}")

    report.skipped_source = sorted(set(source.arrays) - consumed)
    meta = replace(source.meta,
                   parent_checksum=source.source_checksum or source.meta.parent_checksum)
    return Checkpoint(arrays=out, meta=meta), report
