"""Error taxonomy shared by the whole package.

Three failure classes map onto distinct CLI exit codes so scripts can
tell misconfiguration apart from bad input files and numeric blowups.
"""


class CodecompError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(CodecompError):
    """Invalid configuration: bad shapes, bad flag values, impossible schemes."""

    exit_code = 2


class DataError(CodecompError):
    """Malformed or inconsistent input data or files."""

    exit_code = 3


class NumericError(CodecompError):
    """Non-finite values encountered during computation."""

    exit_code = 4

    def __init__(self, message, params=None, report=None):
        super().__init__(message)
        # Last-good state, when the failure happened mid-training.
        self.params = params
        self.report = report
