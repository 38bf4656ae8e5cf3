"""Error types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an argument violates a documented precondition."""


class UnsupportedOperationError(RuntimeError):
    """Raised when an operation is outside its supported regime.

    Typical causes: tensor quadrature requested above the dimension guard,
    or a univariate-only routine called with vector-valued variates.
    """
