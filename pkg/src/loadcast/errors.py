"""Exception types shared across the package.

The CLI maps these onto exit codes, so raising the right class matters:
ConfigError -> 2, DataError -> 3, DivergenceError -> 4.
"""


class LoadcastError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(LoadcastError):
    """Invalid configuration; message names the offending field path."""


class DataError(LoadcastError):
    """Input data violates a precondition (format, coverage, range)."""


class DivergenceError(LoadcastError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, epoch: int | None = None, batch: int | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
