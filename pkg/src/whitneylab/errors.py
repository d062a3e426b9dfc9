"""Exception hierarchy shared by the library and the CLI."""


class WhitneyLabError(Exception):
    pass


class ShapeError(WhitneyLabError, ValueError):
    """Dimension mismatch between points, maps or shapes."""


class DomainError(WhitneyLabError, ValueError):
    pass


class DegenerateError(WhitneyLabError, ValueError):
    pass


class GeometryError(WhitneyLabError):
    pass


class ResourceError(WhitneyLabError):
    def __init__(self, message, cap=None):
        super().__init__(message)
        self.cap = cap


class PreconditionError(WhitneyLabError):
    pass


class LevelTooSmallError(WhitneyLabError, ValueError):
    pass


class NotFoundError(WhitneyLabError):
    def __init__(self, message, best=None, report=None):
        super().__init__(message)
        self.best = best
        self.report = report


class UnsupportedDimensionError(WhitneyLabError):
    pass


class ConfigError(WhitneyLabError):
    """Carries every problem found in a config, not just the first."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
