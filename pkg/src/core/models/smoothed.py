import math
from dataclasses import dataclass

from src.core.errors import InvalidInputError
from src.core.models.measure import DiscreteMeasure


@dataclass(frozen=True)
class SmoothedMeasure:
    """Gaussian mixture base * rho_t, each component with covariance t * I."""

    base: DiscreteMeasure
    bandwidth: float

    def __post_init__(self):
        t = float(self.bandwidth)
        if not math.isfinite(t) or t <= 0:
            raise InvalidInputError(f"Bandwidth must be positive, got {self.bandwidth}")
        object.__setattr__(self, "bandwidth", t)

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def sigma(self) -> float:
        return math.sqrt(self.bandwidth)

    def rescaled(self) -> "SmoothedMeasure":
        """The same mixture in coordinates x / sqrt(t), with unit bandwidth."""
        return SmoothedMeasure(self.base.scaled(1.0 / self.sigma), 1.0)
