"""Exception hierarchy shared by every module."""


class ReplidynError(Exception):
    """Base class for all errors raised by replidyn."""


class DimensionError(ReplidynError, ValueError):
    pass


class DomainError(ReplidynError, ValueError):
    pass


class ParameterError(ReplidynError, ValueError):
    pass


class NumericError(ReplidynError, ArithmeticError):
    """A non-finite value appeared while evaluating an expression tree."""

    def __init__(self, message, path=()):
        self.path = tuple(path)
        if self.path:
            message = f"{message} (at node {'/'.join(self.path)})"
        super().__init__(message)


class InvariantViolation(ReplidynError):
    """The dynamics left the simplex beyond rounding tolerance."""

    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)


class UnsupportedOperation(ReplidynError):
    pass


class PreconditionError(ReplidynError, ValueError):
    pass


class InsufficientDataError(ReplidynError):
    pass
