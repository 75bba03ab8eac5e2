"""Exception types shared across gpgp.

The CLI maps ``ConfigError``/``DataError``/``ParameterError``/``UsageError``
to exit code 2 and ``GPGPIOError`` to exit code 3.
"""


class GPGPError(Exception):
    pass


class ParameterError(GPGPError, ValueError):
    """A distribution or kernel was given parameters outside its domain."""


class UsageError(GPGPError, ValueError):
    """An operation was called on inputs it does not accept."""


class ConfigError(GPGPError, ValueError):
    pass


class DataError(GPGPError, ValueError):
    pass


class ModelError(GPGPError, RuntimeError):
    """A model's renderer or likelihood failed on a valid scene."""


class GPGPIOError(GPGPError, OSError):
    pass
