"""Exception hierarchy.

Validation problems (bad input, violated preconditions) and numerical
failures (non-convergence, divergence) are kept apart because the CLI maps
them to different exit codes.
"""


class VbcError(Exception):
    """Base class for all package errors."""


class ValidationError(VbcError, ValueError):
    """Input or configuration is malformed or violates a precondition."""


class NotStronglyConnectedError(ValidationError):
    """The graph is not strongly connected (the adjacency is reducible)."""


class NumericalError(VbcError, ArithmeticError):
    """A numerical routine failed."""


class ConvergenceError(NumericalError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DivergenceError(NumericalError):
    """A series or optimization diverged."""
