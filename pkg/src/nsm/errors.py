"""Exception and warning types shared across the package."""


class NsmError(Exception):
    """Base class for all package-specific errors."""


class FormatError(NsmError):
    """A file is malformed, truncated, or not of the expected kind."""


class VersionError(FormatError):
    """A container file was written by an incompatible format version."""


class FingerprintMismatchError(NsmError):
    """A persisted artifact was built with different parameters than the active config."""


class PipelineError(NsmError):
    """A pipeline stage could not produce a usable result."""


class DroppedPointsWarning(UserWarning):
    """Non-finite rows were dropped while parsing a point cloud."""


class DegenerateGeometryWarning(UserWarning):
    """An input was too degenerate for a meaningful result; a fallback was used."""
