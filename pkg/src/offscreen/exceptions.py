class OffscreenError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(OffscreenError, ValueError):
    """A row of an input file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GapError(OffscreenError, ValueError):
    """Frame timestamps of a player-half are not uniformly spaced."""


class ValidationError(OffscreenError, ValueError):
    """Input values violate a documented invariant."""


class SchemaError(OffscreenError, ValueError):
    """Columns of a feature matrix do not match what a model was trained on."""


class ConfigError(OffscreenError, ValueError):
    """Invalid run or generator configuration."""
