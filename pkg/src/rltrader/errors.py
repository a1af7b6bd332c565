"""Exception hierarchy shared across the package."""


class RLTraderError(Exception):
    """Base class for all package errors."""


class DataError(RLTraderError, ValueError):
    """Input data is malformed or violates a domain constraint."""


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OrderingError(ParseError):
    """Timestamps are not strictly increasing."""


class DomainError(RLTraderError, ValueError):
    """A value lies outside its allowed domain."""


class InsufficientDataError(RLTraderError, ValueError):
    """Not enough history for an indicator, window or environment."""


class UndefinedMetricError(RLTraderError, ValueError):
    """A metric is mathematically undefined for the given input."""


class ShapeError(RLTraderError, ValueError):
    """Array shapes do not match the network structure."""


class UsageError(RLTraderError, RuntimeError):
    """An API was called out of order."""
