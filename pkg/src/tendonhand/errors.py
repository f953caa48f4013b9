"""Exception types shared across the package."""

from __future__ import annotations


class LimitError(ValueError):
    """A joint angle or motor command is outside its allowed range."""


class DegenerateKeypointError(ValueError):
    """Adjacent keypoints coincide, so no segment direction exists."""


class ActuationLimitError(LimitError):
    """A motor command violates the plant's hardware bounds."""


class RepresentationMismatchError(ValueError):
    """A controller was fed a target in the wrong representation."""


class TrainingDivergenceError(RuntimeError):
    """Loss or gradients became non-finite during optimization."""


class CalibrationError(RuntimeError):
    """Calibration could not establish a usable motor range."""


class DatasetFormatError(ValueError):
    """A serialized artifact failed schema, checksum, or count checks."""


class DigestMissingError(RuntimeError):
    """A pipeline stage ran without the artifacts it depends on."""


class DigestMismatchError(RuntimeError):
    """Artifacts from incompatible configurations were combined."""


class TimestampOrderError(ValueError):
    """Frames arrived with non-monotone timestamps."""
