"""Exception hierarchy shared across the package."""


class CDRLError(Exception):
    """Base class for all errors raised by cdrl."""


class ShapeError(CDRLError, ValueError):
    """Array or vector dimensions do not line up."""


class ParameterError(CDRLError, ValueError):
    """A scalar argument is outside its admissible range."""


class StateError(CDRLError, RuntimeError):
    """An object was used in a state that does not permit the call."""


class ConfigError(CDRLError, ValueError):
    """An experiment or run configuration is invalid."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FormatError(CDRLError, ValueError):
    """A persisted file is malformed."""
