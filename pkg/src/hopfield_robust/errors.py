"""Exception hierarchy shared by every module of the toolkit."""


class HopfieldRobustError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(HopfieldRobustError, ValueError):
    """Operand dimensions are incompatible."""


class ParameterError(HopfieldRobustError, ValueError):
    """A scalar hyperparameter is outside its valid range."""


class DataError(HopfieldRobustError, ValueError):
    """Input data violates a content invariant (labels, lengths, emptiness)."""


class FormatError(DataError):
    """A binary container has a bad magic number, dtype or header."""


class LengthError(DataError):
    """A binary payload is shorter or longer than its header declares."""


class UsageError(HopfieldRobustError, ValueError):
    """An API was called in an unsupported way."""


class NumericError(HopfieldRobustError, ArithmeticError):
    """Non-finite values appeared where finite ones are required."""


class UndefinedMetricError(HopfieldRobustError, ArithmeticError):
    """A metric has a zero denominator and no numeric value."""
