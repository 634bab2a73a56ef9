"""Exception hierarchy. ValidationError maps to CLI exit code 2."""


class ClausecraftError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(ClausecraftError):
    """Bad user input: malformed files, incompatible arguments, broken invariants."""


class SchemaViolationError(ValidationError):
    """A value does not conform to the declared feature schema."""


class ParseError(ValidationError):
    """A file could not be parsed (ragged CSV row, bad JSON, bad binary header)."""


class EnumerationCapError(ValidationError):
    """A clause space or observation space exceeds the configured cap."""

    def __init__(self, message: str, estimate: int):
        super().__init__(message)
        self.estimate = estimate


class TrainingDivergedError(ClausecraftError):
    """Training loss became NaN; usually the learning rate is too high."""
