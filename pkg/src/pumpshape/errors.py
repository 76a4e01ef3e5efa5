"""Exception types shared across the simulator."""


class DomainError(ValueError):
    """An input lies outside the domain of an operation."""


class GridRangeError(IndexError):
    """A requested position or window falls outside a computed grid."""


class StateError(RuntimeError):
    """An operation is not valid for the current state of an object."""


class ConfigError(ValueError):
    """A scenario configuration is inconsistent or incomplete."""


class ShapeError(ValueError):
    """Two grids that must be congruent are not."""
