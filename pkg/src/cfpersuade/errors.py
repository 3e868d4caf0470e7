"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class ConfigError(Exception):
    """Bad configuration or invalid arguments (CLI exit code 2)."""


class DataError(Exception):
    """Malformed or insufficient input data (CLI exit code 3)."""


class NumericError(Exception):
    """Numeric failure: non-finite values, singular systems (CLI exit code 4)."""
