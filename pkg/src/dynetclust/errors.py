"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An argument violates a documented precondition."""


class ConfigError(ValueError):
    """A fit/simulation configuration is unusable (bad sizes, budgets, ...)."""


class ParseError(ValueError):
    """A network file could not be parsed.

    Carries the 1-based line number when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UndefinedMetricError(ValueError):
    """A metric is undefined for the given input (single-class AUC, empty graph)."""


class UnsupportedLikelihoodError(ValueError):
    """The requested likelihood cannot be used with this payload/geometry."""


class NumericalError(RuntimeError):
    """A numerical operation failed beyond recoverable jitter/retry."""
