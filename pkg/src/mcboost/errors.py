class MCBoostError(Exception):
    """Base class for package errors."""


class ConfigError(MCBoostError, ValueError):
    """Invalid configuration or arguments. CLI exit status 2."""


class DataError(MCBoostError, ValueError):
    """Malformed or unusable input data. CLI exit status 3."""


class InvalidLabelError(DataError):
    pass


class EmptyCellError(MCBoostError):
    """Raised by auditors asked to fit on an empty row mask."""
