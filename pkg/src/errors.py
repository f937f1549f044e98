"""Exception hierarchy for the sketching library and experiment runner."""

from typing import Optional


class SketchingError(ValueError):
    """Base class for every error raised by this package."""


class NonFinite(SketchingError):
    """Input matrix contains NaN or infinite entries."""


class ShapeMismatch(SketchingError):
    """Operand shapes do not conform."""


class AllZeroRows(SketchingError):
    """Row-norm distribution requested for an all-zero matrix."""


class DebiasUndefined(SketchingError):
    """Debias weight 1/sqrt(1 - l_i/(m pi_i)) is undefined for some row."""


class NotPowerOfTwo(SketchingError):
    """Walsh-Hadamard transform called on a length that is not a power of two."""


class InvalidSparsity(SketchingError):
    """Sparse-sign sketch sparsity outside [1, n]."""


class NoConvergence(SketchingError):
    """Fixed-point iteration did not reach the requested tolerance."""


class SingularIntermediate(SketchingError):
    """A weighted Gram matrix became numerically singular mid-iteration."""


class Undefined(SketchingError):
    """Closed-form quantity undefined for the given sizes."""


class UndefinedTerm(SketchingError):
    """Row with positive leverage has zero sampling probability."""


class AllTrialsRejected(SketchingError):
    """Every Monte-Carlo trial was rejected by the conditioning event."""


class BudgetExceeded(SketchingError):
    """Exhaustive enumeration would exceed the tuple budget."""


class InsufficientNonzero(SketchingError):
    """Fewer nonzero columns/rows than requested for selection."""


class InvalidDimensions(SketchingError):
    """Requested fixture dimensions are not admissible."""


class InvalidGrid(SketchingError):
    """Scalar search grid does not cover the required range."""


class RaggedRows(SketchingError):
    """CSV body rows have unequal arity."""


class InvariantViolation(SketchingError):
    """A numerical invariant that must hold per trial was violated."""


class ParseError(SketchingError):
    """Non-numeric CSV cell."""

    def __init__(self, message: str, row: int, column: int):
        super().__init__(message)
        self.row = row
        self.column = column


class ZeroVariance(SketchingError):
    """Standardization target column is constant."""

    def __init__(self, message: str, column: int):
        super().__init__(message)
        self.column = column


class ConfigError(SketchingError):
    """Experiment configuration failed to parse or validate."""

    def __init__(self, message: str, violations: Optional[list[str]] = None):
        super().__init__(message)
        self.violations = violations or []
