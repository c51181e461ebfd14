"""Exception hierarchy shared by every module."""


class VBMetricError(Exception):
    """Base class for all library errors."""


class InputError(VBMetricError, ValueError):
    """Malformed or out-of-contract input."""


class ParseError(InputError):
    """Syntax error in a field expression, with source position."""

    def __init__(self, message, line=1, column=1, token=""):
        self.line = line
        self.column = column
        self.token = token
        super().__init__(f"{line}:{column}: {message} (at {token!r})")


class DomainError(VBMetricError, ArithmeticError):
    """A field was evaluated outside its domain (log of zero, division by zero, ...)."""

    def __init__(self, message, subtree="", point=None):
        self.subtree = subtree
        self.point = point
        detail = f" in {subtree}" if subtree else ""
        where = f" at {point}" if point is not None else ""
        super().__init__(f"{message}{detail}{where}")


class NumericalError(VBMetricError, ArithmeticError):
    """An iterative numerical method failed."""

    def __init__(self, message, iterations=None):
        self.iterations = iterations
        suffix = f" after {iterations} iterations" if iterations is not None else ""
        super().__init__(message + suffix)


class DegenerateMetricError(VBMetricError, ArithmeticError):
    """A metric or fiber Hessian is singular or not positive definite."""


class CapabilityError(VBMetricError, NotImplementedError):
    """Requested configuration is outside what the implementation supports."""
