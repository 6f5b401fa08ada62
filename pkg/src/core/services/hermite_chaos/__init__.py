"""Probabilists' Hermite polynomials, Gauss-Hermite quadrature and chaos expansions.

The expansion of the rescaled density difference

    Theta_t(x) = sqrt(t) * (E eta(x, X / sqrt(t)) - E eta(x, Y / sqrt(t))),
    eta(x, y) = exp(<x, y> - |y|^2 / 2) = sum_alpha y^alpha H_alpha(x) / alpha!

has the closed-form coefficients t^((1 - |alpha|) / 2) (E X^alpha - E Y^alpha) / alpha!.
The Ornstein-Uhlenbeck operator L = Delta - x . grad acts on the degree-m chaos
as multiplication by -m, which makes L^-1 and the energy -int w L w dg diagonal.
"""

import logging
import math
from collections.abc import Callable
from functools import lru_cache

import numpy as np
from scipy import linalg, special

from src.core.errors import InvalidInputError, NumericalError, QuadratureBudgetError
from src.core.models.chaos import ChaosExpansion, QuadratureRule
from src.core.models.measure import DiscreteMeasure, MultiIndex, enumerate_multi_indices
from src.core.services.measures import moment_differences, moment_table, moments_agree

logger = logging.getLogger(__name__)

DEFAULT_NODE_BUDGET = 1_000_000
DEFAULT_MEAN_TOL = 1e-10


def hermite_1d(m: int, x: np.ndarray | float) -> np.ndarray:
    """H_m(x) by the recurrence H_{k+1} = x H_k - k H_{k-1}."""
    if m < 0:
        raise InvalidInputError(f"Hermite degree must be >= 0, got {m}")
    x = np.asarray(x, dtype=float)
    previous, current = np.zeros_like(x), np.ones_like(x)
    for k in range(m):
        previous, current = current, x * current - k * previous
    return current


def hermite_table(max_degree: int, points: np.ndarray) -> np.ndarray:
    """Array H[k, ..., j] = H_k(points[..., j]) for k <= max_degree."""
    points = np.asarray(points, dtype=float)
    table = np.empty((max_degree + 1, *points.shape))
    table[0] = 1.0
    if max_degree >= 1:
        table[1] = points
    for k in range(1, max_degree):
        table[k + 1] = points * table[k] - k * table[k - 1]
    return table


def _as_points(x: np.ndarray | float, dim: int) -> tuple[np.ndarray, bool]:
    """(N, dim) view of x, and whether x was a single point."""
    points = np.asarray(x, dtype=float)
    single = points.ndim == 0 or (points.ndim == 1 and points.shape[0] == dim)
    if points.ndim <= 1:
        points = points.reshape(-1, dim) if single or dim == 1 else points.reshape(1, -1)
    if points.ndim != 2 or points.shape[-1] != dim:
        raise InvalidInputError(f"Point dimension {points.shape[-1]} does not match {dim}")
    return points, single


def hermite_eval(alpha: MultiIndex, x: np.ndarray | float) -> np.ndarray | float:
    """H_alpha(x) = prod_i H_{alpha_i}(x_i) at one point or an (N, d) array."""
    points, single = _as_points(x, alpha.dim)
    values = np.ones(points.shape[0])
    for axis, degree in enumerate(alpha.entries):
        values = values * hermite_1d(degree, points[:, axis])
    return float(values[0]) if single else values


@lru_cache(maxsize=64)
def gauss_hermite_rule(m: int) -> QuadratureRule:
    """m-node Gauss rule for the standard Gaussian weight (Golub-Welsch).

    Nodes are the eigenvalues of the Jacobi matrix with zero diagonal and
    off-diagonal sqrt(1), ..., sqrt(m - 1); weights are the squared first
    components of the normalized eigenvectors.

    Raises:
        InvalidInputError: If m < 1
        NumericalError: If the eigen-solve fails

    """
    if m < 1:
        raise InvalidInputError(f"Rule order must be >= 1, got {m}")
    if m == 1:
        return QuadratureRule(nodes=np.zeros(1), weights=np.ones(1))

    diagonal = np.zeros(m)
    off_diagonal = np.sqrt(np.arange(1, m, dtype=float))
    try:
        nodes, vectors = linalg.eigh_tridiagonal(diagonal, off_diagonal)
    except (linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"Gauss-Hermite eigen-solve failed for m={m}: {e}") from e

    weights = vectors[0, :] ** 2
    # symmetric rule: clean the rounding asymmetry
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return QuadratureRule(nodes=nodes, weights=weights / weights.sum())


def tensor_rule(
    dim: int, m: int, budget: int = DEFAULT_NODE_BUDGET
) -> tuple[np.ndarray, np.ndarray]:
    """Tensor-product Gauss-Hermite points (m^dim, dim) and weights.

    Raises:
        QuadratureBudgetError: If m^dim exceeds the node budget

    """
    if m**dim > budget:
        raise QuadratureBudgetError(
            f"Tensor grid of {m}^{dim} = {m**dim} nodes exceeds budget {budget}"
        )
    rule = gauss_hermite_rule(m)
    grids = np.meshgrid(*([rule.nodes] * dim), indexing="ij")
    weight_grids = np.meshgrid(*([rule.weights] * dim), indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([w.ravel() for w in weight_grids], axis=-1), axis=-1)
    return points, weights


def chaos_coefficients(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    t: float,
    max_degree: int,
    tol: float = 1e-9,
) -> ChaosExpansion:
    """Closed-form Hermite coefficients of Theta_t truncated at max_degree.

    Indices whose moments agree within ``tol`` (relative) are not stored.

    Raises:
        InvalidInputError: On t <= 0, max_degree < 1 or dimension mismatch

    """
    if t <= 0:
        raise InvalidInputError(f"Bandwidth must be positive, got {t}")
    if max_degree < 1:
        raise InvalidInputError(f"Truncation degree must be >= 1, got {max_degree}")
    if mu.dim != nu.dim:
        raise InvalidInputError(f"Dimension mismatch: {mu.dim} vs {nu.dim}")

    mu_moments = moment_table(mu, max_degree)
    nu_moments = moment_table(nu, max_degree)
    coeffs = {}
    for alpha, mu_value in mu_moments.values.items():
        if alpha.degree == 0:
            continue
        nu_value = nu_moments[alpha]
        if moments_agree(mu_value, nu_value, tol):
            continue
        scale = t ** ((1 - alpha.degree) / 2)
        coeffs[alpha] = scale * (mu_value - nu_value) / alpha.factorial
    return ChaosExpansion(dim=mu.dim, max_degree=max_degree, coeffs=coeffs)


def project_numeric(
    f: Callable[[np.ndarray], np.ndarray],
    dim: int,
    max_degree: int,
    m: int,
    budget: int = DEFAULT_NODE_BUDGET,
) -> ChaosExpansion:
    """Hermite coefficients (1/alpha!) int f H_alpha dg by tensor quadrature.

    Exact when f is a polynomial and 2m - 1 covers the degree of f * H_alpha;
    approximate otherwise.

    Args:
        f: Vectorized function mapping an (N, dim) array to N values
        dim: Input dimension of f
        max_degree: Truncation degree K
        m: Gauss-Hermite nodes per axis
        budget: Maximum number of tensor nodes

    """
    points, weights = tensor_rule(dim, m, budget)
    values = np.asarray(f(points), dtype=float).reshape(-1)
    table = hermite_table(max_degree, points)
    weighted = weights * values

    coeffs = {}
    for alpha in enumerate_multi_indices(dim, max_degree):
        basis = np.prod([table[a, :, axis] for axis, a in enumerate(alpha.entries)], axis=0)
        coeffs[alpha] = float(weighted @ basis) / alpha.factorial
    logger.debug(f"Projected onto {len(coeffs)} Hermite indices with {m}^{dim} nodes")
    return ChaosExpansion(dim=dim, max_degree=max_degree, coeffs=coeffs)


def ou_apply(expansion: ChaosExpansion) -> ChaosExpansion:
    """Apply L: c_alpha -> -|alpha| c_alpha."""
    return ChaosExpansion(
        dim=expansion.dim,
        max_degree=expansion.max_degree,
        coeffs={a: -a.degree * c for a, c in expansion.items() if a.degree > 0},
    )


def _check_zero_mean(expansion: ChaosExpansion, mean_tol: float) -> None:
    if abs(expansion.mean) > mean_tol:
        raise InvalidInputError(
            f"Expansion has nonzero Gaussian mean {expansion.mean:.3e}; L is not invertible on it"
        )


def ou_inverse(
    theta: ChaosExpansion, mean_tol: float = DEFAULT_MEAN_TOL
) -> ChaosExpansion:
    """Solve L w = theta on the truncated chaos: w_alpha = -c_alpha / |alpha|."""
    _check_zero_mean(theta, mean_tol)
    return ChaosExpansion(
        dim=theta.dim,
        max_degree=theta.max_degree,
        coeffs={a: -c / a.degree for a, c in theta.items() if a.degree > 0},
    )


def dirichlet_energy(theta: ChaosExpansion, mean_tol: float = DEFAULT_MEAN_TOL) -> float:
    """-int w L w dg = sum alpha! c_alpha^2 / |alpha| for w = L^-1 theta."""
    _check_zero_mean(theta, mean_tol)
    return math.fsum(
        a.factorial * c * c / a.degree for a, c in theta.items() if a.degree > 0
    )


def theta_l2(theta: ChaosExpansion) -> float:
    """int theta^2 dg = sum alpha! c_alpha^2."""
    return math.fsum(a.factorial * c * c for a, c in theta.items())


def degree_slice(expansion: ChaosExpansion, degree: int) -> ChaosExpansion:
    """Projection onto the degree-``degree`` chaos."""
    return ChaosExpansion(
        dim=expansion.dim,
        max_degree=expansion.max_degree,
        coeffs={a: c for a, c in expansion.items() if a.degree == degree},
    )


def chaos_evaluate(expansion: ChaosExpansion, x: np.ndarray | float) -> np.ndarray | float:
    """sum_alpha c_alpha H_alpha(x) at one point or an (N, d) array of points."""
    points, single = _as_points(x, expansion.dim)
    table = hermite_table(expansion.max_degree, points)
    values = np.zeros(points.shape[0])
    for alpha, c in expansion.items():
        basis = np.ones(points.shape[0])
        for axis, a in enumerate(alpha.entries):
            basis = basis * table[a, :, axis]
        values += c * basis
    return float(values[0]) if single else values


def chaos_gradient(expansion: ChaosExpansion) -> list[ChaosExpansion]:
    """Partial derivatives, using d/dx_i H_alpha = alpha_i H_{alpha - e_i}."""
    gradient = []
    for axis in range(expansion.dim):
        coeffs: dict[MultiIndex, float] = {}
        for alpha, c in expansion.items():
            lowered = alpha.lowered(axis)
            if lowered is not None:
                coeffs[lowered] = coeffs.get(lowered, 0.0) + alpha.entries[axis] * c
        gradient.append(
            ChaosExpansion(
                dim=expansion.dim,
                max_degree=max(expansion.max_degree - 1, 0),
                coeffs=coeffs,
            )
        )
    return gradient


def leading_slice_constant(mu: DiscreteMeasure, nu: DiscreteMeasure, n: int) -> float:
    """sum over |alpha| = n + 1 of (E X^alpha - E Y^alpha)^2 / alpha!."""
    if mu.dim != nu.dim:
        raise InvalidInputError(f"Dimension mismatch: {mu.dim} vs {nu.dim}")
    return math.fsum(
        delta * delta / alpha.factorial
        for alpha, delta in moment_differences(mu, nu, n + 1).items()
    )


def chaos_tail_bound(
    mu: DiscreteMeasure, nu: DiscreteMeasure, t: float, max_degree: int
) -> float:
    """Bound on the Moser energy carried by chaos degrees above max_degree.

    With R the largest atom norm, |E X^alpha - E Y^alpha| <= 2 R^|alpha| and
    sum_{|alpha|=m} 1/alpha! = d^m / m!, so the degree-m energy is at most
    4 t u^m / (m! m) with u = R^2 d / t. Replacing 1/m by 1/(K + 1) leaves
    the Poisson tail sum_{m > K} u^m / m! = e^u P(K + 1, u), summed exactly.
    """
    radius = max(
        float(np.max(np.linalg.norm(mu.locations, axis=1))),
        float(np.max(np.linalg.norm(nu.locations, axis=1))),
    )
    if radius == 0:
        return 0.0
    u = radius * radius * mu.dim / t
    tail = float(special.gammainc(max_degree + 1, u))
    if tail == 0.0:
        return 0.0
    log_bound = math.log(4.0 * t / (max_degree + 1)) + u + math.log(tail)
    return math.exp(log_bound) if log_bound < 709.0 else math.inf


__all__ = [
    "chaos_coefficients",
    "chaos_evaluate",
    "chaos_gradient",
    "chaos_tail_bound",
    "degree_slice",
    "dirichlet_energy",
    "gauss_hermite_rule",
    "hermite_1d",
    "hermite_eval",
    "hermite_table",
    "leading_slice_constant",
    "ou_apply",
    "ou_inverse",
    "project_numeric",
    "tensor_rule",
    "theta_l2",
]
