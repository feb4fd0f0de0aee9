"""Exception types. The CLI maps them onto exit codes."""


class ConfigurationError(ValueError):
    """Shapes, strides, specs or settings that cannot be combined."""


class DataError(ValueError):
    """Unreadable or inconsistent input data (audio, caches, manifests, scores)."""


class WavFormatError(DataError):
    """Audio that is not RIFF/WAVE PCM16 mono."""


class SampleRateError(DataError):
    """Audio at a rate other than the one the front-end is configured for."""


class NumericError(ArithmeticError):
    """Non-finite values where finite ones are required."""
