"""Exception types shared across the package.

Each carries the process exit code the command-line front end maps it to.
"""


class HNDError(Exception):
    exit_code = 1


class InvalidArgument(HNDError, ValueError):
    exit_code = 2


class UsageError(HNDError):
    exit_code = 2


class FormatError(HNDError, ValueError):
    exit_code = 3


class DegenerateNetworkError(HNDError, ValueError):
    """Raised when a network cannot supply enough ranking pairs."""

    exit_code = 3


class ConfigurationError(HNDError, ValueError):
    exit_code = 2


class NumericError(HNDError, ArithmeticError):
    exit_code = 4

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer
