"""Exception types shared across the package.

Everything that signals invalid input or a violated contract derives from
FloodmapError so the CLI can map it to exit code 1.  Genuine I/O failures
are left as OSError (exit code 2).
"""


class FloodmapError(Exception):
    """Base class for validation and contract errors."""


class GridFormatError(FloodmapError):
    """Malformed FGRID header or payload."""


class ShapeError(FloodmapError):
    """Mismatched grid dimensions, band counts, or window bounds."""


class SemanticsError(FloodmapError):
    """Missing or duplicated band semantics."""


class DegenerateInputError(FloodmapError):
    """Input carries no usable signal (constant grid, single-class labels)."""


class PairingError(FloodmapError):
    """Prediction/truth file stems do not line up."""


class ConfigError(FloodmapError):
    """Invalid pipeline configuration."""
