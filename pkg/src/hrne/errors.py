"""Exception hierarchy shared across the package."""


class HrneError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(HrneError, ValueError):
    pass


class ConfigError(HrneError, ValueError):
    pass


class NumericError(HrneError, ArithmeticError):
    pass


class InputError(HrneError, ValueError):
    """Malformed or empty data (sequences, corpora, token ids)."""


class FormatError(HrneError):
    """A binary file does not start with the expected magic bytes."""


class UnsupportedVersionError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class CheckpointShapeError(FormatError, ShapeError):
    """A stored tensor disagrees with the shape implied by the stored config."""


class TrainingError(HrneError, RuntimeError):
    pass
