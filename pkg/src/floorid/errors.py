"""Typed errors shared across the package."""


class FloorIdError(Exception):
    """Base class for all package errors."""


class ValidationError(FloorIdError):
    """Input data or configuration violates a documented contract."""


class MiddleFloorAnchorError(FloorIdError):
    """The anchor sits on the middle floor of an odd-floor building, so the
    two candidate positions coincide and the ordering cannot be oriented."""


class AmbiguousOrientationError(FloorIdError):
    """The anchor is equidistant from both candidate clusters; refusing to
    pick an orientation silently."""


class DegenerateMappingError(FloorIdError):
    """Two clusters map to the same majority ground-truth floor, so the
    predicted index sequence is not a permutation."""


class NumericError(FloorIdError):
    """A numeric computation produced a non-finite value."""
