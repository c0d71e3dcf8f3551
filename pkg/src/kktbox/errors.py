"""Shared exception types."""


class KktboxError(Exception):
    pass


class ParseError(KktboxError):
    """Format error in a text artifact, with a 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TopologyError(KktboxError):
    """A gate references a wire at or after its own index, or out of range."""


class DimensionError(KktboxError):
    """Vector length does not match the expected dimension."""


class ExtendedGateError(KktboxError):
    """Operation requires a circuit with truncated-linear gates only."""
