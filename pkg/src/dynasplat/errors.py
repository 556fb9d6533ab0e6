"""Exception types shared across the package."""


class DynasplatError(Exception):
    """Base class for all package errors."""


class DegenerateQuaternion(DynasplatError):
    """Raised when a quaternion with (near-)zero norm is normalized."""


class ConfigError(DynasplatError):
    """Invalid or conflicting configuration values."""


class ShapeError(DynasplatError):
    """Array arguments with mismatched or unsupported shapes."""


class StateError(DynasplatError):
    """Operation invoked without the cached state it depends on."""


class FormatError(DynasplatError):
    """Malformed on-disk data (dataset files, snapshots)."""


class EmptySplitError(DynasplatError):
    """A dataset split required to be non-empty is empty."""


class NonFiniteGradient(DynasplatError):
    """A NaN or Inf gradient reached the optimizer; the step is aborted."""
