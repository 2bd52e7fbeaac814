"""Exception hierarchy shared across the package."""


class BlendNavError(Exception):
    """Base class for all package-specific errors."""


class InvalidInput(BlendNavError, ValueError):
    """An argument violated a documented precondition."""


class NumericalError(BlendNavError, RuntimeError):
    """Linear algebra failed beyond what the jitter ladder can recover.

    ``timestamps`` carries the conditioning times of the offending Gram
    matrix so the caller can identify the data that broke it.
    """

    def __init__(self, message, timestamps=()):
        super().__init__(message)
        self.timestamps = tuple(timestamps)


class InferenceFailure(BlendNavError, RuntimeError):
    """Sample-based MAP search produced no finite-scoring candidate."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ProtocolError(BlendNavError, ValueError):
    """Malformed wire message. ``offset`` is the byte position of the fault."""

    def __init__(self, message, offset=0):
        super().__init__(message)
        self.offset = offset


class ConfigError(BlendNavError, ValueError):
    """Invalid experiment configuration. ``key`` names the offending entry."""

    def __init__(self, message, key=""):
        super().__init__(message)
        self.key = key
