"""Exception hierarchy shared by all pipeline phases."""


class KGPropError(Exception):
    """Base class for every error raised by this package."""


class DataError(KGPropError):
    """Input data is unusable (maps to CLI exit code 3)."""


class EmptyGraph(DataError):
    pass


class MalformedRecord(DataError):
    def __init__(self, lineno, line, reason="expected 3 non-empty fields"):
        self.lineno = lineno
        self.line = line
        super().__init__(f"line {lineno}: {reason}: {line!r}")


class AlreadyAugmented(DataError):
    pass


class DisconnectedGraph(DataError):
    pass


class EmptyCore(DataError):
    pass


class CoreNotInStore(DataError):
    pass


class InfeasibleSize(DataError):
    pass


class RelationUnseen(DataError):
    pass


class UnknownFormat(DataError):
    pass


class ChecksumMismatch(DataError):
    pass


class DimensionMismatch(ValueError, KGPropError):
    pass


class OperatorUnsupported(ValueError, KGPropError):
    pass


class ConfigError(ValueError, KGPropError):
    """Invalid configuration value (maps to CLI exit code 2)."""

    def __init__(self, field, message):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")


class Diverged(ArithmeticError, KGPropError):
    """Training loss became non-finite (maps to CLI exit code 4)."""
