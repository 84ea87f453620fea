class GeoXrayError(Exception):
    pass


class DomainError(GeoXrayError, ValueError):
    """A point or parameter lies outside the closed unit disk / admissible range."""


class ShapeError(GeoXrayError, ValueError):
    pass


class NonTrappingViolation(GeoXrayError):
    """A traced geodesic did not exit before ``t_max``."""


class NumericError(GeoXrayError, ArithmeticError):
    pass


class CacheFormatError(GeoXrayError):
    pass


class NeumannDivergence(GeoXrayError):
    """Raised when the Neumann step-change grows past the divergence guard.

    ``history`` holds the per-iteration records collected so far.
    """

    def __init__(self, message, history=None, partial=None):
        super().__init__(message)
        self.history = list(history or [])
        self.partial = partial


class UnsupportedRegionError(GeoXrayError):
    pass


class ConfigError(GeoXrayError, ValueError):
    pass
