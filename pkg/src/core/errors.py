"""Exception hierarchy shared by the services, storage and CLI."""


class SmoothotError(Exception):
    """Base class for all library errors."""


class InvalidInputError(SmoothotError, ValueError):
    """Rejected input: dimension mismatch, bad weights, bad bandwidth, ..."""


class MeasureParseError(InvalidInputError):
    """Measure file does not follow the JSON schema."""

    def __init__(self, message: str, location: str = ""):
        super().__init__(f"{message} (at {location or '/'})")
        self.location = location or "/"


class GenerationError(SmoothotError):
    """Moment-matched pair generation ran out of retries."""


class NumericalError(SmoothotError):
    """A numerical routine failed to converge."""

    def __init__(self, message: str, last_violation: float | None = None):
        super().__init__(message)
        self.last_violation = last_violation


class QuadratureBudgetError(SmoothotError):
    """A tensor quadrature grid would exceed the configured node budget."""


class IndistinguishableMeasuresError(SmoothotError):
    """Moments agree through the configured cap, so no rate can be predicted."""


class UnequalMeansError(InvalidInputError):
    """Operation needs equal means; recenter first, n=0 is unsupported."""


class FitError(SmoothotError):
    """Too few valid rows to fit a decay rate."""
