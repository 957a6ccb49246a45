"""Exception types shared across the package."""


class PairbeamError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(PairbeamError):
    """Invalid configuration, preset name, or option combination."""


class GeometryError(PairbeamError):
    """Microphone array or source geometry violates a constraint."""


class LengthError(PairbeamError):
    """Audio shorter than the operation requires."""


class ShapeError(PairbeamError):
    """Mismatched array shapes between inputs."""


class FormatError(PairbeamError):
    """Malformed or inconsistent file or container contents."""


class SamplingError(PairbeamError):
    """Scene constraint satisfaction failed after bounded retries."""


class NumericError(PairbeamError):
    """Non-finite values where finite math is required."""


class MetricError(PairbeamError):
    """Metric undefined for the given inputs (e.g. an all-zero reference)."""


class DataError(PairbeamError):
    """Missing or unreadable dataset files."""
