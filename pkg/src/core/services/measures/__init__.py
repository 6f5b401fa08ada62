"""Moments, moment matching and moment-matched test pairs for discrete measures."""

import logging
import math
from collections.abc import Sequence

import numpy as np
from scipy import linalg

from src.core.errors import GenerationError, InvalidInputError
from src.core.models.measure import (
    ALL_MATCH,
    DiscreteMeasure,
    MatchOrder,
    MomentTable,
    MultiIndex,
    count_multi_indices,
    enumerate_multi_indices,
    indices_of_degree,
)

logger = logging.getLogger(__name__)

# Node box and jitter used by gen_matched_pair
_NODE_HALF_WIDTH = 2.0
_NODE_JITTER = 0.15
_MIN_NODE_SEPARATION = 0.02
_MIN_HIGH_MOMENT_GAP = 0.1
_MIN_WEIGHT = 1e-3


def _check_dims(*dims: int) -> None:
    if len(set(dims)) != 1:
        raise InvalidInputError(f"Dimension mismatch: {dims}")


def moment(m: DiscreteMeasure, alpha: MultiIndex) -> float:
    """Exact moment E X^alpha = sum_i w_i x_i^alpha.

    Raises:
        InvalidInputError: If alpha and the measure have different dimensions

    """
    _check_dims(m.dim, alpha.dim)
    return math.fsum(m.weights * alpha.monomial(m.locations))


def moment_table(m: DiscreteMeasure, max_degree: int) -> MomentTable:
    """All moments of degree <= max_degree in graded lexicographic order."""
    if max_degree < 0:
        raise InvalidInputError(f"Degree cap must be >= 0, got {max_degree}")
    values = {
        alpha: moment(m, alpha) for alpha in enumerate_multi_indices(m.dim, max_degree)
    }
    # weights sum to 1 only up to rounding; the zeroth moment is 1 by definition
    values[MultiIndex.zero(m.dim)] = 1.0
    return MomentTable(dim=m.dim, max_degree=max_degree, values=values)


def moments_agree(a: float, b: float, tol: float) -> bool:
    """Relative comparison with scale max(1, |a|, |b|)."""
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def matching_order(
    mu: DiscreteMeasure, nu: DiscreteMeasure, max_degree: int, tol: float
) -> MatchOrder:
    """Largest n <= max_degree such that all moments through degree n agree.

    Returns ALL_MATCH when every degree up to ``max_degree`` agrees. Whether a
    pair is reported as ALL_MATCH or as a large n depends on ``tol`` once the
    moments agree to machine precision.
    """
    _check_dims(mu.dim, nu.dim)
    if tol <= 0:
        raise InvalidInputError(f"Tolerance must be positive, got {tol}")
    if max_degree < 0:
        raise InvalidInputError(f"Degree cap must be >= 0, got {max_degree}")

    # degree 0 always agrees
    for degree in range(1, max_degree + 1):
        for alpha in indices_of_degree(mu.dim, degree):
            if not moments_agree(moment(mu, alpha), moment(nu, alpha), tol):
                return degree - 1
    return ALL_MATCH


def moment_differences(
    mu: DiscreteMeasure, nu: DiscreteMeasure, degree: int
) -> dict[MultiIndex, float]:
    """E X^alpha - E Y^alpha for every alpha of exactly ``degree``."""
    _check_dims(mu.dim, nu.dim)
    return {
        alpha: moment(mu, alpha) - moment(nu, alpha)
        for alpha in indices_of_degree(mu.dim, degree)
    }


def translate(m: DiscreteMeasure, v: Sequence[float] | np.ndarray) -> DiscreteMeasure:
    """Shift every atom by v."""
    shift = np.atleast_1d(np.asarray(v, dtype=float))
    _check_dims(m.dim, shift.shape[0])
    return DiscreteMeasure(m.locations + shift, m.weights)


def recenter(
    mu: DiscreteMeasure, nu: DiscreteMeasure
) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    """Translate both measures by minus the mean of mu."""
    _check_dims(mu.dim, nu.dim)
    shift = -mu.mean
    return translate(mu, shift), translate(nu, shift)


def vandermonde(points: np.ndarray, indices: Sequence[MultiIndex]) -> np.ndarray:
    """Rows are x^alpha over the points, one row per index."""
    return np.stack([alpha.monomial(points) for alpha in indices])


def _min_separation(points: np.ndarray) -> float:
    diffs = points[:, None, :] - points[None, :, :]
    dist = np.sqrt(np.sum(diffs**2, axis=-1))
    dist[np.diag_indices_from(dist)] = np.inf
    return float(dist.min())


def _positive_interval(base: np.ndarray, direction: np.ndarray) -> tuple[float, float]:
    """Range of s with base + s * direction > 0 componentwise."""
    with np.errstate(divide="ignore"):
        ratios = -base / direction
    lower = ratios[direction > 0].max(initial=-np.inf)
    upper = ratios[direction < 0].min(initial=np.inf)
    return float(lower), float(upper)


def _try_matched_weights(
    mu: DiscreteMeasure, nu_nodes: np.ndarray, n: int
) -> np.ndarray | None:
    """Weights on nu_nodes matching mu through degree n with a large n+1 gap."""
    low = enumerate_multi_indices(mu.dim, n)
    high = indices_of_degree(mu.dim, n + 1)

    system = vandermonde(nu_nodes, low)
    target = vandermonde(mu.locations, low) @ mu.weights
    particular, *_ = linalg.lstsq(system, target)
    if np.max(np.abs(system @ particular - target)) > 1e-11:
        return None

    null = linalg.null_space(system)
    if null.shape[1] == 0:
        return None
    direction = null[:, 0]

    lower, upper = _positive_interval(particular, direction)
    if not (np.isfinite(lower) and np.isfinite(upper)) or lower >= upper:
        return None

    high_system = vandermonde(nu_nodes, high)
    high_target = vandermonde(mu.locations, high) @ mu.weights
    margin = 0.05 * (upper - lower)
    best, best_gap = None, 0.0
    for s in (lower + margin, upper - margin):
        weights = particular + s * direction
        gap = float(np.max(np.abs(high_target - high_system @ weights)))
        if weights.min() > _MIN_WEIGHT and gap > best_gap:
            best, best_gap = weights, gap

    if best is None or best_gap < _MIN_HIGH_MOMENT_GAP:
        return None
    return best / best.sum()


def gen_matched_pair(
    n: int, dim: int, seed: int, max_retries: int = 500
) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    """Seeded pair (mu, nu) whose moments agree through degree n only.

    mu sits on random nodes in [-2, 2]^dim, nu on a jittered disjoint copy of
    them. nu's weights solve the moment system through degree n and are then
    moved along its null direction, inside the positive cone, to where the
    degree n+1 moments differ the most.

    Args:
        n: Target matching order
        dim: Dimension of the atoms
        seed: Seed for numpy's default_rng
        max_retries: Node draws before giving up

    Returns:
        The pair (mu, nu)

    Raises:
        InvalidInputError: If n < 0 or dim < 1
        GenerationError: If no valid pair is found within the retry budget

    """
    if n < 0 or dim < 1:
        raise InvalidInputError(f"Need n >= 0 and dim >= 1, got n={n}, dim={dim}")

    rng = np.random.default_rng(seed)
    node_count = count_multi_indices(dim, n) + 1

    for attempt in range(max_retries):
        mu_nodes = rng.uniform(-_NODE_HALF_WIDTH, _NODE_HALF_WIDTH, (node_count, dim))
        mu_weights = rng.dirichlet(np.full(node_count, 5.0))
        nu_nodes = mu_nodes + rng.uniform(-_NODE_JITTER, _NODE_JITTER, mu_nodes.shape)

        if _min_separation(np.vstack([mu_nodes, nu_nodes])) < _MIN_NODE_SEPARATION:
            continue

        mu = DiscreteMeasure(mu_nodes, mu_weights / mu_weights.sum())
        nu_weights = _try_matched_weights(mu, nu_nodes, n)
        if nu_weights is None:
            continue

        nu = DiscreteMeasure(nu_nodes, nu_weights)
        if matching_order(mu, nu, n + 2, 1e-9) != n:
            continue

        logger.debug(f"Generated matched pair n={n}, dim={dim} after {attempt + 1} draws")
        return mu, nu

    raise GenerationError(
        f"No moment-matched pair with n={n}, dim={dim} after {max_retries} draws"
    )
