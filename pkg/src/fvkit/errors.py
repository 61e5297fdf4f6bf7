"""Exception hierarchy.

The CLI maps these onto exit codes: parameter/config problems exit 1,
data problems exit 2, numeric failures exit 3.
"""


class FvkitError(Exception):
    """Base class for every error raised by fvkit."""


class ParameterError(FvkitError, ValueError):
    """An argument or configuration value is out of its allowed range."""


class ConfigError(ParameterError):
    pass


class ShapeError(FvkitError, ValueError):
    """Tensor or image extents are incompatible with an operation."""


class DegenerateBatchError(ShapeError):
    pass


class DataError(FvkitError):
    """Input data on disk is missing, malformed or inconsistent."""


class NetpbmError(DataError):
    pass


class UnsupportedFormatError(NetpbmError):
    pass


class UnsupportedDepthError(NetpbmError):
    pass


class TruncatedDataError(NetpbmError):
    pass


class EmptyManifestError(DataError):
    pass


class PairingError(DataError):
    def __init__(self, message, orphans=()):
        super().__init__(message)
        self.orphans = tuple(orphans)


class DataQualityError(DataError):
    pass


class CheckpointError(DataError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class UndefinedMetricError(FvkitError, ArithmeticError):
    """A metric's denominator is zero for the given counts or maps."""


class NumericError(FvkitError, FloatingPointError):
    """A loss or gradient became non-finite."""
