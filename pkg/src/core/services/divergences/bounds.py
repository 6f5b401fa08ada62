"""Chaos upper bounds on W_p and the Kantorovich-Rubinstein lower bound on W1."""

import logging
import math

import numpy as np
from scipy import integrate

from src.core.errors import InvalidInputError, QuadratureBudgetError, UnequalMeansError
from src.core.models.measure import DiscreteMeasure, MultiIndex
from src.core.models.results import DivergenceMethod, DivergenceResult
from src.core.services.hermite_chaos import (
    DEFAULT_MEAN_TOL,
    chaos_coefficients,
    chaos_evaluate,
    chaos_gradient,
    chaos_tail_bound,
    dirichlet_energy,
    ou_inverse,
    tensor_rule,
)
from src.core.services.measures import moment, moments_agree, recenter
from src.core.services.smoothing import theta_gradient, theta_pointwise

logger = logging.getLogger(__name__)


def require_equal_means(mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float) -> None:
    """Raise UnequalMeansError unless every first moment agrees within tol."""
    for axis in range(mu.dim):
        alpha = MultiIndex(tuple(int(k == axis) for k in range(mu.dim)))
        if not moments_agree(moment(mu, alpha), moment(nu, alpha), tol):
            raise UnequalMeansError(
                "Means differ; recenter first (matching order n = 0 is unsupported)"
            )


def _prefactor(mu: DiscreteMeasure, nu: DiscreteMeasure, t: float, p: float) -> float:
    return math.exp((p - 1) * max(mu.second_moment, nu.second_moment) / (2 * t))


def moser_w2_upper_bound(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    t: float,
    max_degree: int,
    tol: float = 1e-9,
    mean_tol: float = DEFAULT_MEAN_TOL,
) -> DivergenceResult:
    """W2^2 <= exp((E|X|^2 v E|Y|^2) / 2t) * (-int w L w dg), w = L^-1 Theta_t.

    Both measures are recentered at the common mean first; second moments in
    the prefactor are those of the recentered measures. The energy is
    truncated at ``max_degree`` and the diagnostics carry a bound on the
    remaining degrees.

    Raises:
        UnequalMeansError: If the means differ

    """
    require_equal_means(mu, nu, tol)
    mu_c, nu_c = recenter(mu, nu)
    theta = chaos_coefficients(mu_c, nu_c, t, max_degree, tol)
    energy = dirichlet_energy(theta, mean_tol)
    prefactor = _prefactor(mu_c, nu_c, t, 2.0)
    tail = chaos_tail_bound(mu_c, nu_c, t, max_degree)

    return DivergenceResult(
        value=prefactor * energy,
        method=DivergenceMethod.CHAOS_BOUND,
        error_estimate=prefactor * tail,
        diagnostics={
            "quantity": "w2sq",
            "energy": energy,
            "prefactor": prefactor,
            "max_degree": max_degree,
            "terms": len(theta.coeffs),
            "tail_bound": tail,
        },
    )


def moser_wp_upper_bound(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    t: float,
    p: float,
    max_degree: int,
    nodes_per_axis: int,
    budget: int,
    tol: float = 1e-9,
    mean_tol: float = DEFAULT_MEAN_TOL,
) -> DivergenceResult:
    """W_p^p <= exp((p-1)(E|X|^2 v E|Y|^2) / 2t) * int |grad w|^p dg.

    The gradient comes from the truncated chaos of w = L^-1 Theta_t and the
    Gaussian integral from a tensor Gauss-Hermite rule. For p = 2 this equals
    the Dirichlet-energy form of moser_w2_upper_bound.
    """
    require_equal_means(mu, nu, tol)
    mu_c, nu_c = recenter(mu, nu)
    w = ou_inverse(chaos_coefficients(mu_c, nu_c, t, max_degree, tol), mean_tol)
    points, weights = tensor_rule(mu.dim, nodes_per_axis, budget)
    gradient = np.stack([chaos_evaluate(g, points) for g in chaos_gradient(w)], axis=-1)
    integral = float(weights @ np.linalg.norm(gradient, axis=-1) ** p)
    prefactor = _prefactor(mu_c, nu_c, t, p)

    return DivergenceResult(
        value=prefactor * integral,
        method=DivergenceMethod.CHAOS_BOUND,
        diagnostics={
            "quantity": "wp_p",
            "p": p,
            "integral": integral,
            "prefactor": prefactor,
            "max_degree": max_degree,
            "nodes_per_axis": nodes_per_axis,
        },
    )


def _psi(s: np.ndarray) -> np.ndarray:
    safe = np.where(s > 0, s, 1.0)
    return np.where(s > 0, np.exp(-1.0 / safe), 0.0)


def _psi_prime(s: np.ndarray) -> np.ndarray:
    safe = np.where(s > 0, s, 1.0)
    return np.where(s > 0, np.exp(-1.0 / safe) / safe**2, 0.0)


def _step(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Smooth step S(u) = psi(u) / (psi(u) + psi(1 - u)) and its derivative."""
    u = np.clip(u, 0.0, 1.0)
    left, right = _psi(u), _psi(1.0 - u)
    total = left + right
    value = left / total
    slope = (_psi_prime(u) * right + left * _psi_prime(1.0 - u)) / total**2
    return value, slope


def bump(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """C-infinity bump: 1 on |y| <= 1, 0 on |y| >= 2, |grad| <= 2.

    Args:
        y: (N, d) points

    Returns:
        Tuple of values (N,) and gradients (N, d)

    """
    radius = np.linalg.norm(y, axis=-1)
    step, slope = _step(radius - 1.0)
    safe_radius = np.where(radius > 0, radius, 1.0)
    gradient = -(slope / safe_radius)[:, None] * y
    return 1.0 - step, gradient


def _integrate_grid(values: np.ndarray, axis_nodes: np.ndarray) -> float:
    result = values
    for _ in range(values.ndim):
        result = integrate.simpson(result, x=axis_nodes, axis=-1)
    return float(result)


def w1_dual_lower_bound(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    t: float,
    grid: int,
    lipschitz_inflation: float = 1.1,
    budget: int = 1_000_000,
    tol: float = 1e-9,
) -> DivergenceResult:
    """W1 >= |int f d(mu*rho_t - nu*rho_t)| / Lip(f) with f(x) = bump(y) Theta_t(y), y = x/sqrt t.

    The integral equals t^(-1/2) int bump Theta_t^2 dg over |y| <= 2. Lip(f)
    is the largest |grad f| on the grid, inflated by ``lipschitz_inflation``,
    so the bound holds up to the grid's resolution of that supremum.

    Raises:
        UnequalMeansError: If the means differ
        InvalidInputError: If grid < 3
        QuadratureBudgetError: If grid^d exceeds the node budget

    """
    require_equal_means(mu, nu, tol)
    if grid < 3:
        raise InvalidInputError(f"Dual-bound grid needs at least 3 nodes, got {grid}")
    if grid**mu.dim > budget:
        raise QuadratureBudgetError(
            f"Dual-bound grid {grid}^{mu.dim} exceeds budget {budget}"
        )
    mu_c, nu_c = recenter(mu, nu)
    dim = mu.dim
    # odd node count for Simpson, never above the requested grid
    axis_nodes = np.linspace(-2.0, 2.0, grid - (grid + 1) % 2)
    mesh = np.meshgrid(*([axis_nodes] * dim), indexing="ij")
    y = np.stack([m.ravel() for m in mesh], axis=-1)

    theta = theta_pointwise(mu_c, nu_c, t, y)
    theta_grad = theta_gradient(mu_c, nu_c, t, y)
    phi, phi_grad = bump(y)
    gaussian = np.exp(-0.5 * np.sum(y * y, axis=1)) / (2 * math.pi) ** (dim / 2)

    shape = mesh[0].shape
    integral = _integrate_grid((phi * theta**2 * gaussian).reshape(shape), axis_nodes)
    integral /= math.sqrt(t)

    f_grad = (phi_grad * theta[:, None] + phi[:, None] * theta_grad) / math.sqrt(t)
    lipschitz = lipschitz_inflation * float(np.max(np.linalg.norm(f_grad, axis=1)))
    value = abs(integral) / lipschitz if lipschitz > 0 else 0.0

    return DivergenceResult(
        value=value,
        method=DivergenceMethod.DUAL_BOUND,
        diagnostics={
            "quantity": "w1",
            "integral": integral,
            "lipschitz": lipschitz,
            "grid": axis_nodes.shape[0],
        },
    )
