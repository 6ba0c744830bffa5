"""Exception types shared by the library and the command line front end.

The exit code of `Dtsssi.py` is taken from the exception class."""


class DtsssiError(Exception):
    exit_code = 1


class ConfigError(DtsssiError, ValueError):
    """Malformed or unknown configuration value; names the dotted key when known."""
    exit_code = 2


class SizeError(DtsssiError, ValueError):
    """A requested computation exceeds an index range, an enumeration budget or the available data."""
    exit_code = 3


class FactorizationError(DtsssiError, RuntimeError):
    exit_code = 3


class VerificationFailed(DtsssiError):
    exit_code = 4
