class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(ValueError):
    """A documented precondition was violated."""


class NumericError(ArithmeticError):
    """A NaN/Inf or underflow appeared where a finite value is required."""
