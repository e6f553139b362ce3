"""Exception hierarchy.

Each error carries the process exit code the command-line driver maps it to
(1 usage/config, 2 data, 3 I/O).
"""


class FarfieldError(Exception):
    exit_code = 2


class ConfigError(FarfieldError, ValueError):
    exit_code = 1


class DataError(FarfieldError, ValueError):
    exit_code = 2


class FormatError(DataError):
    """Malformed container or text format."""


class UnsupportedFormatError(FormatError):
    """Well-formed file in an encoding we do not handle."""


class ShapeError(DataError):
    pass


class RateError(DataError):
    """Sample-rate mismatch between two signals."""


class GeometryError(DataError):
    pass


class InfeasibleT60Error(ConfigError):
    def __init__(self, t60, minimum):
        super().__init__(
            f"T60 {t60:.4f} s is not achievable in this room "
            f"(minimum {minimum:.4f} s)"
        )
        self.t60 = t60
        self.minimum = minimum


class InsufficientDecayError(DataError):
    pass


class DegenerateSignalError(DataError):
    pass


class NoNoiseAvailableError(DataError):
    pass


class InsufficientFramesError(DataError):
    pass


class SamplerError(FarfieldError):
    exit_code = 2
