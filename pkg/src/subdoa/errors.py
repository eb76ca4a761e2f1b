"""Exception types shared across the package."""


class SubdoaError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(SubdoaError):
    """Invalid geometry, scenario, grid, or config-file contents."""


class DegenerateSolution(SubdoaError):
    """A solver returned an all-zero matrix; no sources are recoverable."""


class PhaseUndetermined(SubdoaError):
    """A sub-array weight is numerically zero, so its phase is undefined."""


class UnsupportedGeometry(SubdoaError):
    """An estimator requires array structure the given geometry lacks."""
