"""Exception types shared across the package."""


class GraphfuseError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(GraphfuseError, ValueError):
    """An input violated a documented precondition."""


class DimensionError(ContractError):
    """Tensor or matrix shapes are incompatible for the requested operation."""


class InvariantError(GraphfuseError, RuntimeError):
    """An internal invariant was violated; indicates a bug, not bad input."""
