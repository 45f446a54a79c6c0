"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class InfeasibleError(DomainError):
    """The channel pair admits no authentication scheme of the requested kind."""


class ScheduleError(DomainError):
    """The round schedule cannot be built (truncated recursion or size cap)."""


class ConstructionError(RuntimeError):
    """A randomized construction failed verification after all retries."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ProtocolError(RuntimeError):
    """A party state machine was driven out of turn."""
