"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where a quantity is defined."""


class ConfigError(ValueError):
    """A configuration value or sweep setting is invalid."""


class NumericalFailure(ArithmeticError):
    """A quadrature, series or cancellation-prone sum could not meet its tolerance.

    ``partial`` carries the best estimate available when the failure was
    detected (``None`` if nothing useful was computed).
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
