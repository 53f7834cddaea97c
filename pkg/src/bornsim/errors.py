"""Exception hierarchy shared by all bornsim modules."""


class BornsimError(Exception):
    """Base class for every error raised by bornsim."""


class NormalizationError(BornsimError, ValueError):
    """Amplitudes or probabilities do not sum to one."""


class DomainError(BornsimError, ValueError):
    """An argument lies outside the domain of an operation."""


class CapacityError(BornsimError):
    """A requested enumeration or dense construction exceeds its cap.

    Exact enumeration is infeasible at this size; use the bound or
    log-domain paths instead.
    """


class ContractViolation(BornsimError):
    """An input violates an operation's precondition (e.g. non-diagonal rho)."""


class InsufficientCountsError(BornsimError):
    """Too few observations left after pooling for a chi-square test."""
