"""Exception hierarchy. Every error is a ValueError so callers can catch broadly."""


class QConformalError(ValueError):
    pass


class ConfigError(QConformalError):
    """Invalid generation or run configuration."""


class OperandError(QConformalError):
    """Gate placed on an invalid qubit."""


class SchemaError(QConformalError):
    """Feature vectors with mismatching schemas."""


class SizeError(QConformalError):
    """Too few samples for the requested operation."""


class InputError(QConformalError):
    """Array shapes or values unusable for the requested computation."""


class FormatError(QConformalError):
    """Persisted file failed validation."""
