"""Exception types shared across the package."""


class ValidationError(ValueError):
    """A configuration or input value violates its documented constraints."""


class CapacityError(ValidationError):
    """Problem size exceeds what exhaustive region enumeration supports."""


class SamplingError(RuntimeError):
    """Rejection sampling exhausted its budget (degenerate support)."""


class UnderdeterminedError(RuntimeError):
    """The observed Fisher information is singular (disconnected comparisons)."""


class IndistinguishableError(RuntimeError):
    """The design value is numerically zero: two ranks cannot be separated."""
