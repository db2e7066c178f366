"""Exception types shared across the package."""


class LampscanError(Exception):
    """Base class for all package-specific errors."""


class InvalidArgumentError(LampscanError, ValueError):
    """An input violates a documented precondition."""


class BehindCameraError(LampscanError):
    """A 3D point (or edge endpoint) has non-positive view-space depth."""


class AmbiguousRotationError(LampscanError):
    """Rotation angle too close to pi for a unique logarithm."""


class InsufficientDataError(LampscanError, ValueError):
    """Fewer samples than an estimator needs."""


class ParallelRayError(LampscanError):
    """Camera ray is (numerically) parallel to the target plane."""


class CeilingNotFoundError(LampscanError, LookupError):
    """No ceiling-type surface available for plane estimation."""


class SurfaceParseError(LampscanError, ValueError):
    """Malformed building-geometry document.

    ``line`` carries the 1-based source line when the XML parser reports one.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)
        self.line = line


class ConfigError(LampscanError):
    """Bad or missing run configuration (CLI exit status 2)."""
