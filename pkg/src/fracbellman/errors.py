"""Exception hierarchy shared by all modules."""


class FracBellmanError(Exception):
    """Base class for all package errors."""


class InvalidKernelError(FracBellmanError, ValueError):
    """A kernel returned a negative, NaN or non-finite value."""


class NumericError(FracBellmanError, ArithmeticError):
    """A quadrature or update produced a non-finite value."""


class UnsupportedExteriorError(FracBellmanError, ValueError):
    """Exterior data cannot be integrated against the tail weight."""


class DomainError(FracBellmanError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class CFLViolation(FracBellmanError):
    """The time step would break discrete monotonicity."""


class InsufficientResolution(FracBellmanError):
    """The grid cannot resolve the requested scales."""


class PreconditionError(FracBellmanError):
    """Input data does not satisfy the hypotheses of a check."""


class ConfigError(FracBellmanError, ValueError):
    """Schema violation in an experiment config."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line

    def __str__(self):
        msg = super().__str__()
        return f"line {self.line}: {msg}" if self.line is not None else msg
