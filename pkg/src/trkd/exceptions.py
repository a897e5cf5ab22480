"""Exception hierarchy shared by every module."""


class TrkdError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameterError(TrkdError, ValueError):
    pass


class ShapeError(TrkdError, ValueError):
    pass


class ClassIndexError(TrkdError, IndexError):
    pass


class EmptySetError(TrkdError, ValueError):
    pass


class DegenerateMassError(TrkdError, ValueError):
    pass


class DegenerateInputError(TrkdError, ValueError):
    pass


class StateError(TrkdError, RuntimeError):
    pass


class DivergenceError(TrkdError, FloatingPointError):
    """Raised when a training loss becomes non-finite.

    ``step`` is the optimizer step at which it happened and ``log`` holds the
    records written up to that point.
    """

    def __init__(self, step, log=None, message=None):
        self.step = step
        self.log = list(log or [])
        super().__init__(message or f"non-finite loss at step {step}")


class ConfigError(TrkdError, ValueError):
    """Invalid run configuration; ``key`` names the offending field."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class FormatError(TrkdError, ValueError):
    """Malformed binary file (bad magic, wrong size, ...)."""


class VersionError(FormatError):
    pass


class TruncationError(FormatError):
    pass


class DumpValidationError(FormatError):
    pass
