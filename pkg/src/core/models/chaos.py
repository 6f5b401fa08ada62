from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from src.core.errors import InvalidInputError
from src.core.models.measure import MultiIndex


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Gauss-Hermite rule normalized for the standard Gaussian weight."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        weights = np.array(self.weights, dtype=float)
        if nodes.shape != weights.shape or nodes.ndim != 1:
            raise InvalidInputError("Nodes and weights must be 1D arrays of equal length")
        nodes.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def order(self) -> int:
        return self.nodes.shape[0]

    def integrate(self, values: np.ndarray) -> float:
        """Gaussian expectation of a function sampled at the nodes."""
        return float(self.weights @ np.asarray(values, dtype=float))


@dataclass(frozen=True)
class ChaosExpansion:
    """Function f = sum_alpha c_alpha H_alpha in the multivariate Hermite basis.

    Coefficients are stored sparsely; missing indices are zero.
    """

    dim: int
    max_degree: int
    coeffs: Mapping[MultiIndex, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1 or self.max_degree < 0:
            raise InvalidInputError(
                f"Invalid expansion shape dim={self.dim}, max_degree={self.max_degree}"
            )
        for alpha in self.coeffs:
            if alpha.dim != self.dim:
                raise InvalidInputError(f"Index {alpha} does not have dimension {self.dim}")
            if alpha.degree > self.max_degree:
                raise InvalidInputError(
                    f"Index {alpha} exceeds truncation degree {self.max_degree}"
                )
        ordered = dict(
            sorted(
                self.coeffs.items(),
                key=lambda item: (item[0].degree, tuple(-a for a in item[0].entries)),
            )
        )
        object.__setattr__(self, "coeffs", ordered)

    def coeff(self, alpha: MultiIndex) -> float:
        return self.coeffs.get(alpha, 0.0)

    def items(self) -> Iterator[tuple[MultiIndex, float]]:
        return iter(self.coeffs.items())

    @property
    def mean(self) -> float:
        """Gaussian mean of f, i.e. the degree-0 coefficient."""
        return self.coeff(MultiIndex.zero(self.dim))

    def to_dict(self) -> dict[str, Any]:
        return {
            "dim": self.dim,
            "max_degree": self.max_degree,
            "coeffs": [{"alpha": a.to_list(), "c": c} for a, c in self.coeffs.items()],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ChaosExpansion":
        return cls(
            dim=int(data["dim"]),
            max_degree=int(data["max_degree"]),
            coeffs={
                MultiIndex(tuple(entry["alpha"])): float(entry["c"])
                for entry in data["coeffs"]
            },
        )
