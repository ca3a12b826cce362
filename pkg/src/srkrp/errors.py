"""Exception hierarchy shared by every module."""


class SRKRPError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(SRKRPError, ValueError):
    """A scalar parameter is outside its admissible range."""


class ShapeError(SRKRPError, ValueError):
    """Matrix or block shapes are incompatible."""


class NumericalError(SRKRPError, ArithmeticError):
    """A numerical kernel (SVD, QR) failed to converge."""


class RankError(SRKRPError, ArithmeticError):
    """A system matrix is rank deficient and cannot be solved uniquely."""

    def __init__(self, message: str, rank: int | None = None):
        super().__init__(message)
        self.rank = rank


class DecodeError(RankError):
    """Decoding failed because the generator matrix is not full column rank.

    ``metrics`` is filled in by the runtime when the failure happens inside
    an orchestrated run, so callers can still inspect the costs incurred.
    """

    def __init__(self, message: str, rank: int | None = None, metrics=None):
        super().__init__(message, rank)
        self.metrics = metrics


class ConfigError(SRKRPError, ValueError):
    """A run configuration is malformed or references unknown keys."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.reason = message
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.key = key
        self.line = line
