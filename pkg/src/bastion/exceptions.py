"""Exception hierarchy shared by every module.

The CLI maps the three top-level categories onto disjoint exit codes.
"""


class BastionError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(BastionError, ValueError):
    """Invalid configuration: bad lengths, periods, hyperparameters or shapes."""

    exit_code = 2


class DataError(BastionError, ValueError):
    """Input data could not be read or is not usable."""

    exit_code = 3


class NumericError(BastionError, ArithmeticError):
    """A numerical routine failed."""

    exit_code = 4


class InvalidLengthError(ConfigError):
    pass


class InvalidPeriodError(ConfigError):
    pass


class InvalidHyperparameterError(ConfigError):
    pass


class NonIdentifiableError(ConfigError):
    """The penalized decomposition has no unique solution."""


class NotPositiveDefiniteError(NumericError):
    """A Cholesky pivot was not strictly positive.

    Attributes
    ----------
    index : int
        Zero-based column at which the factorization broke down.
    """

    def __init__(self, index, message=None):
        self.index = int(index)
        super().__init__(message or f"matrix is not positive definite (pivot {self.index})")


class StateCorruptionError(NumericError):
    """The sampler state contains a non-finite or non-positive value."""

    def __init__(self, block, sweep=None, message=None):
        self.block = block
        self.sweep = sweep
        where = f" at sweep {sweep}" if sweep is not None else ""
        super().__init__(message or f"invalid state in block '{block}'{where}")


class OffsetUnderflowError(NumericError):
    """The log-squared residual transform produced a non-finite value."""
