"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A constraint on schedules, orders or level parameters is violated."""


class NumericalAbort(ArithmeticError):
    """A recursion produced a non-finite iterate and was stopped."""
