"""Exception types shared across the package."""


class DispregError(Exception):
    """Base class for all library errors."""


class DomainError(DispregError, ValueError):
    """An argument fell outside the mathematical domain of an operation.

    Carries an optional observation index so callers can report which
    data row triggered the violation.
    """

    def __init__(self, message, row=None):
        if row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)
        self.row = row


class RankDeficiencyError(DispregError, ValueError):
    """A local design matrix does not have full column rank."""

    def __init__(self, block, rank, ncols):
        super().__init__(
            f"{block} design matrix is rank deficient (rank {rank} < {ncols} columns)"
        )
        self.block = block
        self.rank = rank
        self.ncols = ncols


class NonConvergenceError(DispregError, RuntimeError):
    """An iterative routine failed to converge and the caller asked to be strict."""


class UnsupportedFamilyOperation(DispregError, NotImplementedError):
    """The family's catalog entry does not provide the requested piece
    (sampler, full log-likelihood, ...)."""


class ConfigError(DispregError, ValueError):
    """A run configuration is malformed or self-inconsistent."""


class DataError(DispregError, ValueError):
    """A data table cannot be parsed or does not match the model."""


class NumericsWarning(UserWarning):
    """Non-fatal numerical fallback (e.g. clipped pseudo-inverse)."""
