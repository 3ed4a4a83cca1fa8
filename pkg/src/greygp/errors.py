"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    pass


class DegenerateTargetError(ValueError):
    """Targets have zero variance, so a normalised error is undefined."""


class NumericalFailure(RuntimeError):
    """A covariance matrix could not be factorised even with added jitter."""

    def __init__(self, message: str, jitters: tuple[float, ...] = ()):
        super().__init__(message)
        self.jitters = tuple(jitters)


class DivergedRunError(NumericalFailure):
    """An optimiser produced a non-finite gradient or parameter."""
