"""Exception types raised across the package."""


class FblabError(Exception):
    """Base class for all package errors."""


class OutOfDomain(FblabError, ValueError):
    """A query point lies outside the space-time hull of a grid-backed field."""


class GridTooSmall(FblabError, ValueError):
    pass


class NoConvergence(FblabError, RuntimeError):
    def __init__(self, max_iters, residual, time_index=None):
        self.max_iters = max_iters
        self.residual = residual
        self.time_index = time_index
        where = "" if time_index is None else f" at time index {time_index}"
        super().__init__(
            f"projected iteration did not converge in {max_iters} sweeps{where} "
            f"(residual {residual:.3e})"
        )


class InvalidPolynomial(FblabError, ValueError):
    pass


class DivisionByZero(FblabError, ZeroDivisionError):
    pass


class NotOnFreeBoundary(FblabError, ValueError):
    pass


class DegenerateFit(FblabError, ValueError):
    pass


class InsufficientSamples(FblabError, ValueError):
    pass


class NoisyTail(FblabError, ValueError):
    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class NotSingular(FblabError, ValueError):
    pass


class DimensionMismatch(FblabError, ValueError):
    pass


class InsufficientRange(FblabError, ValueError):
    pass


class SchemaError(FblabError, ValueError):
    """Malformed configuration document; ``pointer`` is a JSON pointer."""

    def __init__(self, pointer, message):
        self.pointer = pointer
        super().__init__(f"{pointer or '/'}: {message}")


class ValidationError(FblabError, ValueError):
    pass
