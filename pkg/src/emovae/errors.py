"""Exception hierarchy shared by every module."""


class EmovaeError(Exception):
    """Base class for all package errors."""


class DimensionError(EmovaeError, ValueError):
    pass


class ParameterError(EmovaeError, ValueError):
    pass


class NumericError(EmovaeError, ArithmeticError):
    pass


class EmptyRequestError(ParameterError):
    pass


class TooShortError(EmovaeError, ValueError):
    def __init__(self, message, utterance_id=None):
        if utterance_id is not None:
            message = f"{utterance_id}: {message}"
        super().__init__(message)
        self.utterance_id = utterance_id


class UnsupportedFormatError(EmovaeError, ValueError):
    pass


class ModelKindError(EmovaeError, ValueError):
    pass


class ManifestError(EmovaeError, ValueError):
    """Malformed or inconsistent manifest. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(EmovaeError, ValueError):
    pass


class ContainerError(EmovaeError, ValueError):
    pass
