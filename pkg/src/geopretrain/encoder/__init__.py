"""Backbone construction, checkpoint archives and backbone transplantation."""

from .backbone import (
    BackboneSpec,
    ResNetBackbone,
    backbone_spec,
    build_backbone,
    check_input_size,
    init_module,
    spec_from_arrays,
)
from .checkpoint import (
    ALLOWED_METHODS,
    Checkpoint,
    CheckpointMeta,
    arrays_from_module,
    backbone_from_checkpoint,
    file_checksum,
    fresh_generalist,
    generalist_from_torchvision,
    load_arrays_into_module,
    load_checkpoint,
    save_checkpoint,
)
from .transplant import TransplantReport, transplant_backbone

__all__ = [
    "ALLOWED_METHODS",
    "BackboneSpec",
    "Checkpoint",
    "CheckpointMeta",
    "ResNetBackbone",
    "TransplantReport",
    "arrays_from_module",
    "backbone_from_checkpoint",
    "backbone_spec",
    "build_backbone",
    "check_input_size",
    "file_checksum",
    "fresh_generalist",
    "generalist_from_torchvision",
    "init_module",
    "load_arrays_into_module",
    "load_checkpoint",
    "save_checkpoint",
    "spec_from_arrays",
    "transplant_backbone",
]
