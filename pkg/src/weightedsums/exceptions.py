"""Exception hierarchy shared by all modules."""


class WeightedSumsError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgumentError(WeightedSumsError, ValueError):
    pass


class UnsupportedError(WeightedSumsError, ValueError):
    """The requested operation is not defined for the given model."""


class ResourceLimitError(WeightedSumsError, RuntimeError):
    """An enumeration or allocation would exceed the configured budget."""


class NumericFailureError(WeightedSumsError, ArithmeticError):
    pass


class DegenerateInputError(WeightedSumsError, ValueError):
    pass
