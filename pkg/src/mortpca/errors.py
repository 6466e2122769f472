"""Exception hierarchy.

The CLI maps these onto its exit codes: ``DataError`` -> 2,
``NumericalError`` -> 3.
"""


class MortpcaError(Exception):
    """Base class for all package errors."""


class DataError(MortpcaError, ValueError):
    """Input data is malformed, incomplete or outside its valid domain."""


class DomainError(DataError):
    """A value lies outside the domain of a transformation."""


class NumericalError(MortpcaError, ArithmeticError):
    """An estimation or numerical routine failed."""


class ConvergenceError(NumericalError):
    def __init__(self, message, grad_norm=None):
        super().__init__(message)
        self.grad_norm = grad_norm
