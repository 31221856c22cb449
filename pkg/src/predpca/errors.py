"""Exception hierarchy. CLI exit codes map onto these classes."""


class PredPCAError(Exception):
    """Base class for all package errors."""


class FormatError(PredPCAError, ValueError):
    """A file does not follow its declared binary or text layout."""


class DataError(PredPCAError, ValueError):
    """Data values are unusable (NaN, Inf, empty)."""


class DimensionError(PredPCAError, ValueError):
    """Array shapes are inconsistent or too small for the requested operation."""


class ParameterError(PredPCAError, ValueError):
    """An argument is outside its admissible range."""


class InputError(PredPCAError, ValueError):
    """A matrix violates a structural precondition such as symmetry."""


class NumericError(PredPCAError, ArithmeticError):
    """A computation diverged, failed to converge, or hit a singular matrix."""
