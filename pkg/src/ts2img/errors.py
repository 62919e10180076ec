"""Exception hierarchy. The CLI maps the two families onto exit codes."""


class Ts2ImgError(Exception):
    pass


class ConfigError(Ts2ImgError, ValueError):
    """Invalid configuration or arguments (CLI exit code 2)."""


class DataError(Ts2ImgError, ValueError):
    """Input data violates an operation's precondition (CLI exit code 3)."""


class ConstantSeriesWarning(UserWarning):
    """Min-max normalization of a series with max == min."""


class TooShort(DataError):
    pass


class SeriesTooShort(TooShort):
    pass


class WindowOutOfRange(DataError):
    pass


class ShiftTooLarge(ConfigError):
    pass


class CropTooLarge(ConfigError):
    pass


class EmptyClass(DataError):
    pass


class FractionOutOfRange(ConfigError):
    pass


class ShapeMismatch(DataError):
    pass


class EmptyDataset(DataError):
    pass


class LengthMismatch(DataError):
    pass


class InvalidClass(DataError):
    pass


class EmptyMatrix(DataError):
    pass


class EmptyHistory(DataError):
    pass
