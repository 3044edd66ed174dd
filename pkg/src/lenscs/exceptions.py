"""Exception types raised by lenscs."""


class NumericalFailure(ArithmeticError):
    """Raised when an iterative solver produces non-finite values.

    The ``iteration`` attribute holds the outer iteration at which the
    failure was detected (``None`` when not applicable).
    """

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class OperatorContractError(ValueError):
    """Raised when a linear operator violates a stated property
    (e.g. a CG operator that is not self-adjoint)."""
