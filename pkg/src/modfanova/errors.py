"""Exception types shared across the package."""


class DataError(ValueError):
    """Input data is malformed, incomplete or inconsistent with the space."""


class InvariantViolation(RuntimeError):
    """An internal consistency check failed (a bug, not bad input)."""
