"""Gaussian mixtures mu * rho_t: densities, 1D CDF and quantiles, Theta_t, sampling."""

import logging
import math

import numpy as np
from scipy import special

from src.core.errors import InvalidInputError, NumericalError
from src.core.models.measure import DiscreteMeasure
from src.core.models.smoothed import SmoothedMeasure

logger = logging.getLogger(__name__)

_MAX_BISECTIONS = 200


def _as_points(x: np.ndarray | float, dim: int) -> tuple[np.ndarray, bool]:
    points = np.asarray(x, dtype=float)
    single = points.ndim == 0 or (points.ndim == 1 and points.shape[0] == dim)
    if points.ndim <= 1:
        points = points.reshape(-1, dim) if single or dim == 1 else points.reshape(1, -1)
    if points.ndim != 2 or points.shape[-1] != dim:
        raise InvalidInputError(
            f"Point dimension {points.shape[-1]} does not match measure dimension {dim}"
        )
    return points, single


def _squared_distances(points: np.ndarray, locations: np.ndarray) -> np.ndarray:
    diffs = points[:, None, :] - locations[None, :, :]
    return np.einsum("nkd,nkd->nk", diffs, diffs)


def log_density(s: SmoothedMeasure, x: np.ndarray | float) -> np.ndarray | float:
    """log sum_i w_i (2 pi t)^(-d/2) exp(-|x - x_i|^2 / 2t), finite everywhere."""
    points, single = _as_points(x, s.dim)
    t = s.bandwidth
    exponents = np.log(s.base.weights)[None, :] - _squared_distances(
        points, s.base.locations
    ) / (2 * t)
    values = special.logsumexp(exponents, axis=1) - 0.5 * s.dim * math.log(
        2 * math.pi * t
    )
    return float(values[0]) if single else values


def density(s: SmoothedMeasure, x: np.ndarray | float) -> np.ndarray | float:
    return np.exp(log_density(s, x))


def _check_1d(s: SmoothedMeasure) -> None:
    if s.dim != 1:
        raise InvalidInputError(f"Operation needs a 1D measure, got dim={s.dim}")


def _standardized(s: SmoothedMeasure, x: np.ndarray) -> np.ndarray:
    return (x[..., None] - s.base.locations[:, 0]) / s.sigma


def cdf_1d(s: SmoothedMeasure, x: np.ndarray | float) -> np.ndarray | float:
    """sum_i w_i Phi((x - x_i) / sqrt(t))."""
    _check_1d(s)
    xs = np.asarray(x, dtype=float)
    values = special.ndtr(_standardized(s, xs)) @ s.base.weights
    return float(values) if xs.ndim == 0 else values


def sf_1d(s: SmoothedMeasure, x: np.ndarray | float) -> np.ndarray | float:
    """Survival function 1 - cdf_1d, accurate in the upper tail."""
    _check_1d(s)
    xs = np.asarray(x, dtype=float)
    values = special.ndtr(-_standardized(s, xs)) @ s.base.weights
    return float(values) if xs.ndim == 0 else values


def pdf_1d(s: SmoothedMeasure, x: np.ndarray) -> np.ndarray:
    _check_1d(s)
    z = _standardized(s, np.asarray(x, dtype=float))
    return (np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)) @ s.base.weights / s.sigma


def quantile_from_score(s: SmoothedMeasure, z: np.ndarray | float) -> np.ndarray | float:
    """Quantile at level Phi(z), solved in whichever tail keeps full precision.

    Each component has quantile x_i + sqrt(t) z at this level, so the mixture
    quantile is bracketed by the smallest and largest of them. Bisection
    shrinks the bracket to rounding width and a Newton step polishes the root.
    """
    _check_1d(s)
    zs = np.asarray(z, dtype=float)
    scores = np.atleast_1d(zs)
    atoms = s.base.locations[:, 0]

    if s.base.size == 1:
        result = atoms[0] + s.sigma * scores
        return float(result[0]) if zs.ndim == 0 else result

    upper = scores > 0
    # residual is increasing in x on both branches
    target = np.where(upper, special.ndtr(-scores), special.ndtr(scores))
    target_log = np.where(upper, special.log_ndtr(-scores), special.log_ndtr(scores))

    def residual(x: np.ndarray) -> np.ndarray:
        lower_branch = np.log(np.maximum(cdf_1d(s, x), 1e-320)) - target_log
        upper_branch = target_log - np.log(np.maximum(sf_1d(s, x), 1e-320))
        return np.where(upper, upper_branch, lower_branch)

    lo = atoms.min() + s.sigma * scores
    hi = atoms.max() + s.sigma * scores
    # roots near 0 would otherwise demand subnormal widths
    floor = max(float(np.abs(atoms).max()), s.sigma)
    for _ in range(_MAX_BISECTIONS):
        width = hi - lo
        scale = np.maximum(np.maximum(np.abs(lo), np.abs(hi)), floor)
        if np.all(width <= 4 * np.spacing(scale)):
            break
        mid = 0.5 * (lo + hi)
        below = residual(mid) < 0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    else:
        raise NumericalError("Quantile bisection did not reach rounding width")

    x = 0.5 * (lo + hi)
    tail = np.where(upper, sf_1d(s, x), cdf_1d(s, x))
    slope = pdf_1d(s, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        step = np.where(upper, tail - target, target - tail) / slope
    polished = x + np.where(np.isfinite(step), step, 0.0)
    keep = (polished >= lo - np.abs(width)) & (polished <= hi + np.abs(width))
    x = np.where(keep, polished, x)
    return float(x[0]) if zs.ndim == 0 else x


def quantile_1d(s: SmoothedMeasure, q: np.ndarray | float) -> np.ndarray | float:
    """Inverse of cdf_1d for q in (0, 1).

    Raises:
        InvalidInputError: If any q is outside the open unit interval

    """
    qs = np.asarray(q, dtype=float)
    if np.any((qs <= 0) | (qs >= 1)) or not np.all(np.isfinite(qs)):
        raise InvalidInputError("Quantile levels must lie in (0, 1)")
    return quantile_from_score(s, special.ndtri(qs))


def theta_pointwise(
    mu: DiscreteMeasure, nu: DiscreteMeasure, t: float, x: np.ndarray | float
) -> np.ndarray | float:
    """Theta_t(x) = sqrt(t) (E eta(x, X/sqrt t) - E eta(x, Y/sqrt t)).

    eta(x, y) = exp(<x, y> - |y|^2 / 2) is evaluated directly. Theta_t links the
    two smoothed densities through
    (mu * rho_t - nu * rho_t)(x) = t^(-1/2) Theta_t(x / sqrt t) rho_t(x).
    """
    if t <= 0:
        raise InvalidInputError(f"Bandwidth must be positive, got {t}")
    if mu.dim != nu.dim:
        raise InvalidInputError(f"Dimension mismatch: {mu.dim} vs {nu.dim}")
    points, single = _as_points(x, mu.dim)
    sigma = math.sqrt(t)
    values = sigma * (_eta_mean(mu, points, sigma) - _eta_mean(nu, points, sigma))
    return float(values[0]) if single else values


def _eta_terms(m: DiscreteMeasure, points: np.ndarray, sigma: float) -> np.ndarray:
    y = m.locations / sigma
    exponents = points @ y.T - 0.5 * np.sum(y * y, axis=1)[None, :]
    return np.exp(exponents) * m.weights[None, :]


def _eta_mean(m: DiscreteMeasure, points: np.ndarray, sigma: float) -> np.ndarray:
    return _eta_terms(m, points, sigma).sum(axis=1)


def theta_gradient(
    mu: DiscreteMeasure, nu: DiscreteMeasure, t: float, x: np.ndarray | float
) -> np.ndarray:
    """Gradient of Theta_t: E[X eta(x, X/sqrt t)] - E[Y eta(x, Y/sqrt t)].

    Returns an (N, d) array, or a (d,) array for a single point.
    """
    if mu.dim != nu.dim:
        raise InvalidInputError(f"Dimension mismatch: {mu.dim} vs {nu.dim}")
    points, single = _as_points(x, mu.dim)
    sigma = math.sqrt(t)
    gradient = _eta_terms(mu, points, sigma) @ mu.locations - _eta_terms(
        nu, points, sigma
    ) @ nu.locations
    return gradient[0] if single else gradient


def sample(s: SmoothedMeasure, count: int, seed: int) -> np.ndarray:
    """Draw ``count`` points: atom by weight, then N(0, t I) jitter."""
    if count < 1:
        raise InvalidInputError(f"Sample count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    components = rng.choice(s.base.size, size=count, p=s.base.weights)
    noise = rng.standard_normal((count, s.dim))
    return s.base.locations[components] + s.sigma * noise


def derive_seed(base_seed: int, index: int) -> int:
    """Per-task seed for concurrent work: base_seed XOR index."""
    return int(base_seed) ^ int(index)
