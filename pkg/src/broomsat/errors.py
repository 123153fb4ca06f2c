"""Exception hierarchy shared by every stage.

Each class carries a short machine-readable ``code`` so callers (and the
command line runner) can map failures to exit statuses without string
matching.
"""


class BroomsatError(Exception):
    code = "error"
    exit_status = 1

    def __init__(self, message, code=None):
        super().__init__(message)
        if code is not None:
            self.code = code


class ConfigError(BroomsatError):
    code = "config"
    exit_status = 2


class DataError(BroomsatError):
    code = "data"
    exit_status = 3


class FormatError(DataError):
    """Malformed on-disk artifact (bundle, spec file, checkpoint)."""

    code = "format"


class NumericError(BroomsatError):
    code = "numeric"
    exit_status = 4
