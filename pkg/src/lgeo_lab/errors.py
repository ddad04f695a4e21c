"""Exception types shared across the package."""


class LgeoError(Exception):
    """Base class for lgeo-lab errors."""


class TimeOutOfDomainError(LgeoError):
    """Queried time lies outside the flow's time domain."""


class ChartError(LgeoError):
    """Coordinates outside the chart's valid range, or trajectory left it."""


class InvalidInputError(LgeoError):
    """Malformed arguments (bad intervals, unsorted lists, empty grids...)."""


class MinimizationError(LgeoError):
    """No shooting start converged to the target; carries diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class TailBoundError(LgeoError):
    """Quadrature domain too small to certify the requested tail mass."""


class SolverError(LgeoError):
    """Rotationally symmetric flow solver failed."""
