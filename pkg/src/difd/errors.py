"""Exception types shared across the package, mapped to CLI exit codes."""


class DifdError(Exception):
    exit_code = 1


class ConfigurationError(DifdError):
    """Invalid configuration: incompatible shapes, plans, or variants."""

    exit_code = 2


class DataError(DifdError):
    """Bad or degenerate input data."""

    exit_code = 3


class NumericError(DifdError):
    """Non-finite values where finite ones are required."""

    exit_code = 4
