"""Exception hierarchy shared across the package."""


class CoinceptError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(CoinceptError, ValueError):
    """A caller-supplied argument violates an operation's contract."""


class NumericError(CoinceptError, ArithmeticError):
    """A computation produced NaN/Inf or otherwise left the finite domain.

    Carries optional context (encoder block index, training iteration) in
    ``context``.
    """

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context


class ParseError(CoinceptError, ValueError):
    """A data file could not be parsed; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class UnsupportedVersionError(CoinceptError):
    """Checkpoint format version not understood by this build."""


class CorruptCheckpointError(CoinceptError):
    """Checkpoint file is structurally invalid (truncated, unknown fields, ...)."""


class ArtifactMismatchError(CoinceptError):
    """A checkpoint does not match the data/config it is being used with."""
