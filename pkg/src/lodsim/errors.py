"""Exception types shared across the package."""


class LodsimError(Exception):
    """Base class for all package errors."""


class ConstraintViolationError(LodsimError, ValueError):
    """A parameter record violates one of its invariants.

    Carries the name of the offending field in ``field``.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class ParameterRegimeError(LodsimError, ValueError):
    """The requested quantity is undefined in this parameter regime."""


class ConvergenceError(LodsimError, RuntimeError):
    """A truncation/refinement loop failed to converge within its ceiling."""


class ToleranceError(LodsimError, RuntimeError):
    """A numerical routine could not meet its accuracy target."""


class InvalidGeneratorError(LodsimError, ValueError):
    """A rate function produced an invalid (e.g. negative) rate."""
