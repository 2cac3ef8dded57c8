"""Exception types shared across the package."""


class GridlocError(Exception):
    """Base class for all gridloc errors."""


class GeometryError(GridlocError, ValueError):
    """Invalid geometric input (e.g. emitter coincident with a station)."""


class FieldOfViewError(GridlocError, ValueError):
    """Angle outside the array's usable (-pi/2, pi/2) local field of view."""


class DivergenceError(GridlocError, RuntimeError):
    """Solver iterate blew past the divergence guard."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class ConfigError(GridlocError, ValueError):
    """Bad or inconsistent configuration (files, fingerprints, dimensions)."""
