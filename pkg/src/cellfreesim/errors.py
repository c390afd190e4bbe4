"""Exception types shared across the package."""


class CellFreeSimError(Exception):
    """Base class for all package-specific errors."""


class InfeasibleGeometry(CellFreeSimError):
    """Antenna layout cannot satisfy the spacing constraint inside the area."""


class NonPositiveDistance(CellFreeSimError):
    """Path loss requested for a zero or negative link distance."""


class MalformedDataset(CellFreeSimError):
    """Measured-channel file violates the container format."""


class TauTooSmall(CellFreeSimError):
    """Pilot length is shorter than the number of UEs."""


class NumericalFailure(CellFreeSimError):
    """A linear solve left a residual above the accepted threshold."""


class MaxIterationsExceeded(CellFreeSimError):
    """An iterative solver ran out of iterations before converging."""


class Infeasible(CellFreeSimError):
    """The requested target cannot be met even at full transmit power."""


class TooManyUEs(CellFreeSimError):
    """Brute-force search requested for more UEs than the grid can afford."""


class EmptyInput(CellFreeSimError):
    """Statistic requested over an empty collection."""


class ConfigError(CellFreeSimError):
    """Configuration file is invalid; message names the offending field."""
