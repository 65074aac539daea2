"""Exception types shared across the toolkit."""

from __future__ import annotations


class GeopretrainError(Exception):
    """Base class for all toolkit errors."""


class DatasetError(GeopretrainError):
    """Raised for unreadable, empty or malformed datasets."""


class MaskColorError(DatasetError):
    """Raised when a mask pixel matches no entry of the color table."""


class CheckpointError(GeopretrainError):
    """Raised for unreadable, corrupt or incompatible checkpoints."""


class TransplantError(CheckpointError):
    """Raised when backbone weights cannot be transplanted as requested."""


class ConfigError(GeopretrainError):
    """Raised for invalid run configuration; message names the field."""


class TrainingDiverged(GeopretrainError):
    """Raised when training hits a non-finite loss.

    Carries the last finite model state so callers can persist it.
    """

    def __init__(self, message, checkpoint=None, history=None):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.history = history


class BackendError(GeopretrainError):
    """Raised when a detector backend is missing or misbehaves."""
