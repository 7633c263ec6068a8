"""Exception types shared across the toolkit."""


class BlackBanditError(Exception):
    """Base class for all toolkit errors."""


class BudgetExhausted(BlackBanditError):
    """A loss query was requested beyond the ledger's cap."""

    def __init__(self, spent: int, cap: int, requested: int = 1):
        self.spent = spent
        self.cap = cap
        self.requested = requested
        super().__init__(f"query budget exhausted: {spent} spent of {cap}, {requested} more requested")


class TransportError(BlackBanditError):
    """Remote oracle returned a non-2xx status or a malformed body."""


class IllConditionedProbe(BlackBanditError):
    """The probe Gram matrix is too ill-conditioned to solve."""

    def __init__(self, cond: float):
        self.cond = cond
        super().__init__(f"probe Gram matrix condition estimate {cond:.3e} exceeds 1e12")


class DegenerateGradient(BlackBanditError):
    """A zero vector cannot be projected onto the l2 unit sphere."""


class DiagnosticsUnavailable(BlackBanditError):
    """True gradients / free losses were requested from a non-diagnostic oracle."""


class ConfigError(BlackBanditError):
    """Invalid, unknown, or missing configuration key."""
