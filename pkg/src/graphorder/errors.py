"""Exception types shared across the toolkit."""


class GraphOrderError(Exception):
    """Base class for all toolkit errors."""


class InputError(GraphOrderError):
    """Caller passed structurally invalid arguments."""


class ParseError(InputError):
    """A dataset file failed to parse; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ResourceError(GraphOrderError):
    """An exact computation exceeded its configured size budget."""


class NumericError(GraphOrderError):
    """A numeric invariant was violated: non-finite value, bad shape, empty support."""


class GenerationError(GraphOrderError):
    """A randomized generator exhausted its retry budget."""
