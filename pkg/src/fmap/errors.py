"""Exception hierarchy shared by all pipeline stages.

The CLI maps these onto exit codes: usage errors exit 2 (argparse),
data errors exit 3, numerical errors exit 4.
"""

from __future__ import annotations


class FmapError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(FmapError):
    """A file does not parse as the expected on-disk format."""


class ValidationError(FmapError):
    """Parsed data violates a declared invariant (NaN payload, bounds, ...)."""


class ShapeError(FmapError):
    """Tensor rank or dimensions are incompatible with the operation."""


class DegenerateInputError(FmapError):
    """Input is structurally valid but numerically degenerate (e.g. all-zero features)."""


class ConvergenceError(FmapError):
    """Iterative solver failed to reach tolerance within its iteration budget."""

    def __init__(self, message: str, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class NumericError(FmapError):
    """A non-finite value appeared mid-computation; carries stage context."""
