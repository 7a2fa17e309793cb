"""Exception types shared across the package.

The CLI maps these onto exit codes: data problems exit with 2,
numeric/degeneracy problems with 3, usage mistakes with 1.
"""


class DeconfoundError(Exception):
    """Base class for all package errors."""


class DataError(DeconfoundError):
    """Malformed or unusable input data (parse failures, bad sizes,
    non-finite entries)."""


class ParameterError(DeconfoundError):
    """Invalid argument or configuration value."""


class ShapeError(ParameterError):
    """Dimension mismatch between arrays."""


class DegenerateProblemError(DeconfoundError):
    """The computation is numerically degenerate (perfect collinearity,
    zero residual, vanishing denominator)."""


class NumericError(DeconfoundError):
    """Arithmetic produced non-finite values."""


class ConstructionError(DeconfoundError):
    """A randomized construction failed to satisfy its certificate."""
