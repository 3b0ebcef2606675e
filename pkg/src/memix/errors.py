"""Exception hierarchy shared by every module of the package."""


class MemixError(Exception):
    """Base class for all errors raised by memix."""


class DimensionError(MemixError, ValueError):
    """Array shapes are inconsistent or a matrix is not square."""


class SingularMatrixError(MemixError, ArithmeticError):
    """A matrix that must be inverted is (numerically) singular."""


class DomainError(MemixError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class InvariantError(MemixError, ValueError):
    """A distributional invariant (normalisation, nonnegativity, weight sum) fails."""


class ConvergenceError(MemixError, ArithmeticError):
    """An iterative numerical procedure did not converge."""


class IllConditionedError(MemixError, ArithmeticError):
    """Eigenvector basis too ill-conditioned for the diagonalisation fast path."""


class UnderflowError(DomainError):
    """A tail probability underflowed, so conditioning on it is meaningless."""


class DegenerateModelError(DomainError):
    """The model is degenerate for the requested quantity (zero variance, zero density)."""


class UnsupportedModelError(MemixError, ValueError):
    """The model cannot be handled by the requested procedure (e.g. signed weights in simulation)."""


class EstimationError(MemixError, ValueError):
    """A Monte Carlo functional cannot be estimated from the given samples."""


class DataValidationError(MemixError, ValueError):
    """Input data failed validation; carries the offending row and column when known."""

    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


class ModelFileError(MemixError, ValueError):
    """A model file could not be parsed into a valid model."""


class UnderflowWarning(RuntimeWarning):
    """A tail quantity was returned as zero because the tail probability underflowed."""


class ParseError(MemixError, ValueError):
    """Malformed input text (ragged CSV rows, non-numeric cells)."""

    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col
