"""Exception types shared across the package."""


class AmiLteError(Exception):
    """Base class for all package errors."""


class InvalidConfigurationError(AmiLteError, ValueError):
    pass


class TbsLookupError(AmiLteError, LookupError):
    pass


class InfeasibleError(AmiLteError):
    """No RB count up to the table/grid limit satisfies the demand."""


class UndefinedRatioError(AmiLteError, ZeroDivisionError):
    pass


class SchedulingError(AmiLteError):
    pass


class ChecksumError(AmiLteError):
    def __init__(self, filename, expected, actual):
        super().__init__(f"checksum mismatch for {filename}: expected {expected}, got {actual}")
        self.filename = filename


class ScenarioError(AmiLteError, ValueError):
    """Scenario text could not be parsed or failed validation.

    ``line`` is set for syntax errors, ``field`` for semantic ones.
    """

    def __init__(self, message, *, line=None, field=None):
        super().__init__(message)
        self.line = line
        self.field = field
