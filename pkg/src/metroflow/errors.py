"""Exception types shared across the package."""


class MetroflowError(Exception):
    """Base class for all package errors."""


class InputError(MetroflowError, ValueError):
    """Bad input data (unknown station, malformed series, unclassified date...)."""


class ConfigError(MetroflowError, ValueError):
    """Invalid parameter or configuration value."""


class NoRouteError(MetroflowError, LookupError):
    """No route connects the requested origin and destination."""


class InsufficientHistoryError(InputError):
    """Not enough prior same-weekday data for a same-period average."""


class NumericalError(MetroflowError, FloatingPointError):
    """Non-finite values appeared during a numerical computation."""


class StageError(MetroflowError):
    """Wraps an exception raised inside a named pipeline stage."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
