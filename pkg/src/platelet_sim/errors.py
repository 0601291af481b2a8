"""Exception hierarchy shared by all modules."""


class PlateletSimError(Exception):
    """Base class for all errors raised by this package."""


class GeometryError(PlateletSimError):
    pass


class GridError(PlateletSimError):
    pass


class StencilError(PlateletSimError):
    pass


class SolverError(PlateletSimError):
    """Factorization breakdown, singular systems, or iterative non-convergence."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ConfigError(PlateletSimError):
    pass
