"""Exception types shared across the package."""


class CtoqwError(Exception):
    """Base class for all package errors."""


class ModelError(CtoqwError, ValueError):
    """Malformed model input: bad shapes, missing operators, invalid ids."""


class PreconditionError(CtoqwError, ValueError):
    """An operation was called outside its contract (for example a
    non-escaping vertex where a convergent dwell integral is required)."""


class ConvergenceError(CtoqwError, RuntimeError):
    """An iterative computation failed to converge within its budget."""


class BudgetError(PreconditionError):
    """A requested enumeration exceeds the configured work budget."""
