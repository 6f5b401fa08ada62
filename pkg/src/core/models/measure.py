from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from math import comb, factorial, prod
from typing import Any

import numpy as np

from src.core.errors import InvalidInputError

# Weight sum tolerance enforced when a measure is constructed
WEIGHT_SUM_TOL = 1e-12


class MatchStatus(Enum):
    """Sentinel outcomes of the matching-order detector."""

    ALL_MATCH = "all_match"  # moments agree through every inspected degree


ALL_MATCH = MatchStatus.ALL_MATCH

# Either a finite matching order or ALL_MATCH, never an int standing in for both
MatchOrder = int | MatchStatus


def is_all_match(order: MatchOrder) -> bool:
    return order is MatchStatus.ALL_MATCH


@dataclass(frozen=True, order=False)
class MultiIndex:
    """Vector of nonnegative integers indexing monomials and Hermite polynomials."""

    entries: tuple[int, ...]

    def __post_init__(self):
        entries = tuple(int(a) for a in self.entries)
        if not entries:
            raise InvalidInputError("MultiIndex needs at least one entry")
        if any(a < 0 for a in entries):
            raise InvalidInputError(f"MultiIndex entries must be >= 0: {entries}")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def of(cls, *entries: int) -> "MultiIndex":
        return cls(tuple(entries))

    @classmethod
    def zero(cls, dim: int) -> "MultiIndex":
        return cls((0,) * dim)

    @property
    def dim(self) -> int:
        return len(self.entries)

    @property
    def degree(self) -> int:
        return sum(self.entries)

    @property
    def factorial(self) -> int:
        return prod(factorial(a) for a in self.entries)

    def monomial(self, points: np.ndarray) -> np.ndarray:
        """Evaluate x^alpha at an (N, d) array of points."""
        points = np.asarray(points, dtype=float)
        if points.shape[-1] != self.dim:
            raise InvalidInputError(
                f"Point dimension {points.shape[-1]} does not match index dimension {self.dim}"
            )
        return np.prod(points ** np.asarray(self.entries), axis=-1)

    def lowered(self, axis: int) -> "MultiIndex | None":
        """Index with entry ``axis`` decreased by one, or None if it is zero."""
        if self.entries[axis] == 0:
            return None
        entries = list(self.entries)
        entries[axis] -= 1
        return MultiIndex(tuple(entries))

    def to_list(self) -> list[int]:
        return list(self.entries)

    def __iter__(self) -> Iterator[int]:
        return iter(self.entries)

    def __str__(self) -> str:
        return "(" + ",".join(str(a) for a in self.entries) + ")"


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    # First entry largest first: (2,0), (1,1), (0,2)
    if parts == 1:
        yield (total,)
        return
    for head in range(total, -1, -1):
        for tail in _compositions(total - head, parts - 1):
            yield (head, *tail)


def indices_of_degree(dim: int, degree: int) -> list[MultiIndex]:
    """All multi-indices of exactly ``degree`` in lexicographic order."""
    if dim < 1:
        raise InvalidInputError(f"Dimension must be >= 1, got {dim}")
    if degree < 0:
        return []
    return [MultiIndex(c) for c in _compositions(degree, dim)]


def enumerate_multi_indices(dim: int, max_degree: int) -> list[MultiIndex]:
    """Graded lexicographic enumeration of all indices with degree <= max_degree.

    The result has C(max_degree + dim, dim) elements.
    """
    indices: list[MultiIndex] = []
    for degree in range(max_degree + 1):
        indices.extend(indices_of_degree(dim, degree))
    return indices


def count_multi_indices(dim: int, max_degree: int) -> int:
    return comb(max_degree + dim, dim)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finitely supported probability measure on R^d.

    Finitely supported measures have sub-Gaussian tails of every order, so the
    tail condition used by the asymptotic results holds automatically.
    """

    locations: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        locations = np.array(self.locations, dtype=float)
        weights = np.array(self.weights, dtype=float)

        if locations.ndim == 1:
            locations = locations.reshape(-1, 1)
        if locations.ndim != 2 or locations.shape[1] < 1:
            raise InvalidInputError(
                f"Locations must be an (atoms, dim) array, got shape {locations.shape}"
            )
        if weights.ndim != 1 or weights.shape[0] != locations.shape[0]:
            raise InvalidInputError(
                f"Expected {locations.shape[0]} weights, got shape {weights.shape}"
            )
        if weights.size == 0:
            raise InvalidInputError("A measure needs at least one atom")
        if not (np.all(np.isfinite(locations)) and np.all(np.isfinite(weights))):
            raise InvalidInputError("Locations and weights must be finite")
        if np.any(weights <= 0):
            raise InvalidInputError("Weights must be strictly positive")
        if abs(weights.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidInputError(
                f"Weights sum to {weights.sum():.15g}, expected 1 within {WEIGHT_SUM_TOL}"
            )

        locations.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "locations", locations)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_atoms(
        cls, atoms: Iterable[tuple[Sequence[float] | float, float]]
    ) -> "DiscreteMeasure":
        """Build from (location, weight) pairs; scalar locations mean d=1."""
        pairs = list(atoms)
        if not pairs:
            raise InvalidInputError("A measure needs at least one atom")
        locations = [np.atleast_1d(np.asarray(x, dtype=float)) for x, _ in pairs]
        if len({loc.shape for loc in locations}) != 1:
            raise InvalidInputError("All atom locations must have the same length")
        return cls(np.stack(locations), np.array([w for _, w in pairs], dtype=float))

    @classmethod
    def dirac(cls, point: Sequence[float] | float) -> "DiscreteMeasure":
        return cls(np.atleast_1d(np.asarray(point, dtype=float)).reshape(1, -1), [1.0])

    @property
    def dim(self) -> int:
        return self.locations.shape[1]

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def atoms(self) -> list[tuple[tuple[float, ...], float]]:
        return [
            (tuple(float(v) for v in loc), float(w))
            for loc, w in zip(self.locations, self.weights, strict=True)
        ]

    @cached_property
    def mean(self) -> np.ndarray:
        return self.weights @ self.locations

    @cached_property
    def covariance(self) -> np.ndarray:
        centered = self.locations - self.mean
        return (centered * self.weights[:, None]).T @ centered

    @cached_property
    def second_moment(self) -> float:
        """E|X|^2."""
        return float(self.weights @ np.sum(self.locations**2, axis=1))

    def canonical(self) -> "DiscreteMeasure":
        """Same measure with atoms sorted lexicographically by location."""
        order = np.lexsort(self.locations.T[::-1])
        return DiscreteMeasure(self.locations[order], self.weights[order])

    def scaled(self, factor: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.locations * factor, self.weights)

    def to_dict(self) -> dict[str, Any]:
        return {
            "dim": self.dim,
            "atoms": [{"x": list(loc), "w": w} for loc, w in self.atoms],
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return np.array_equal(self.locations, other.locations) and np.array_equal(
            self.weights, other.weights
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class MomentTable:
    """Moments E X^alpha for every alpha with |alpha| <= max_degree."""

    dim: int
    max_degree: int
    values: dict[MultiIndex, float] = field(default_factory=dict)

    def __getitem__(self, alpha: MultiIndex) -> float:
        return self.values[alpha]

    def degree_slice(self, degree: int) -> dict[MultiIndex, float]:
        return {a: v for a, v in self.values.items() if a.degree == degree}

    def to_dict(self) -> dict[str, Any]:
        return {
            "dim": self.dim,
            "max_degree": self.max_degree,
            "moments": [
                {"alpha": alpha.to_list(), "value": value}
                for alpha, value in self.values.items()
            ],
        }
