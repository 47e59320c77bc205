"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A parameter is outside the documented domain of an operation."""


class DegenerateGeometryError(ValueError):
    """The requested lattice has no usable plane part."""


class BudgetError(RuntimeError):
    """An exact computation would exceed the configured resource budget."""


class ContractViolation(ValueError):
    """Caller broke a documented precondition (programming error)."""
