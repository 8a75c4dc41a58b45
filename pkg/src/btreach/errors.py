"""Exception and warning types shared across the toolkit."""


class BtreachError(Exception):
    """Base class for all toolkit errors."""


class OutOfDomainError(BtreachError):
    """A state (or dataset row) lies outside the partitioned domain box."""


class ConfigError(BtreachError):
    """Invalid or inconsistent pipeline configuration."""


class InconsistentSchemeError(BtreachError):
    """Two artifacts were built against different partition schemes."""


class NumericalFailureError(BtreachError):
    """A linear-algebra step failed beyond recovery (e.g. Cholesky after jitter retry)."""


class DataTooLargeError(BtreachError):
    """Dataset exceeds the dense-path cap and no subsampling fallback was configured."""


class InfeasibleError(BtreachError):
    """An inner distribution problem has an empty feasible set."""


class EmptyProjectionWarning(UserWarning):
    """A region projected onto the partition contains no full cell."""
