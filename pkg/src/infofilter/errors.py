"""Exception hierarchy shared by all modules."""


class InfoFilterError(Exception):
    """Base class for every error raised by this package."""


class DomainError(InfoFilterError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class ConfigurationError(InfoFilterError, ValueError):
    """A configuration or experiment definition is invalid."""


class NumericalError(InfoFilterError, ArithmeticError):
    """A linear-algebra step failed or produced an unusable result."""


class ConvergenceError(NumericalError):
    """Value iteration did not reach its tolerance."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class IngestionError(InfoFilterError, ValueError):
    """A data file could not be loaded."""

    def __init__(self, message, problems=()):
        super().__init__(message)
        self.problems = list(problems)
