"""Closed-form large-bandwidth limits and the Gaussian surrogate W2."""

import logging
import math

import numpy as np
from numpy.polynomial import hermite_e
from scipy import integrate, linalg, stats

from src.config.settings import MeasureSettings, MonteCarloSettings
from src.core.errors import (
    IndistinguishableMeasuresError,
    InvalidInputError,
    NumericalError,
)
from src.core.models.measure import DiscreteMeasure, MultiIndex, is_all_match
from src.core.models.results import LimitConstants
from src.core.services.hermite_chaos import hermite_table
from src.core.services.measures import matching_order, moment_differences

logger = logging.getLogger(__name__)


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Symmetric square root with eigenvalues floored at zero."""
    try:
        values, vectors = linalg.eigh(0.5 * (matrix + matrix.T))
    except linalg.LinAlgError as e:
        raise NumericalError(f"Matrix square root failed: {e}") from e
    return (vectors * np.sqrt(np.maximum(values, 0.0))) @ vectors.T


def gaussian_w2(mu: DiscreteMeasure, nu: DiscreteMeasure, t: float) -> float:
    """W2 between N(m_mu, S_mu + tI) and N(m_nu, S_nu + tI).

    Raises:
        InvalidInputError: On t < 0 or dimension mismatch
        NumericalError: If a matrix square root fails

    """
    if t < 0:
        raise InvalidInputError(f"Bandwidth must be >= 0, got {t}")
    if mu.dim != nu.dim:
        raise InvalidInputError(f"Dimension mismatch: {mu.dim} vs {nu.dim}")

    mean_gap_sq = float(np.sum((mu.mean - nu.mean) ** 2))
    cov_mu = mu.covariance + t * np.eye(mu.dim)
    cov_nu = nu.covariance + t * np.eye(nu.dim)

    if mu.dim == 1:
        # |s1 - s2| written without cancellation
        s_mu, s_nu = math.sqrt(cov_mu[0, 0]), math.sqrt(cov_nu[0, 0])
        gap = (cov_mu[0, 0] - cov_nu[0, 0]) / (s_mu + s_nu)
        return math.sqrt(mean_gap_sq + gap * gap)

    root_nu = _psd_sqrt(cov_nu)
    cross = _psd_sqrt(root_nu @ cov_mu @ root_nu)
    bures = np.trace(cov_mu) + np.trace(cov_nu) - 2.0 * np.trace(cross)
    return math.sqrt(max(mean_gap_sq + float(bures), 0.0))


def leading_polynomial(
    differences: dict[MultiIndex, float], points: np.ndarray
) -> np.ndarray:
    """P(z) = sum_alpha (Delta M_alpha / alpha!) H_alpha(z) at (N, d) points."""
    degree = max(alpha.degree for alpha in differences)
    table = hermite_table(degree, points)
    values = np.zeros(points.shape[0])
    for alpha, delta in differences.items():
        basis = np.ones(points.shape[0])
        for axis, a in enumerate(alpha.entries):
            basis = basis * table[a, :, axis]
        values += delta / alpha.factorial * basis
    return values


def tv_constant_monte_carlo(
    differences: dict[MultiIndex, float], dim: int, samples: int, seed: int
) -> tuple[float, float]:
    """(1/2) E|P(Z)| for standard Gaussian Z from independent draws.

    Every multi-index in P has the same degree, so |P(-z)| = |P(z)| and
    reflected draws would only duplicate samples.

    Returns:
        Tuple of (estimate, standard error)

    Raises:
        InvalidInputError: If fewer than 2 samples are requested

    """
    if samples < 2:
        raise InvalidInputError(f"Need at least 2 samples, got {samples}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((samples, dim))
    values = 0.5 * np.abs(leading_polynomial(differences, z))
    estimate = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(samples))
    return estimate, stderr


def tv_constant_quadrature_1d(delta: float, degree: int) -> float:
    """(1/2) int |delta / m! He_m(z)| phi(z) dz, integrated between the roots."""
    coefficients = np.zeros(degree + 1)
    coefficients[degree] = delta / math.factorial(degree)
    polynomial = hermite_e.HermiteE(coefficients)
    roots = np.sort(polynomial.roots().real)
    edges = [-np.inf, *roots.tolist(), np.inf]

    def integrand(z: float) -> float:
        return abs(polynomial(z)) * stats.norm.pdf(z)

    total = 0.0
    for left, right in zip(edges[:-1], edges[1:], strict=True):
        value, _ = integrate.quad(integrand, left, right, epsabs=0, epsrel=1e-12)
        total += value
    return 0.5 * total


class LimitsService:
    """Limiting constants of rescaled W2, chi2, KL and TV for a measure pair."""

    def __init__(
        self,
        measure_settings: MeasureSettings | None = None,
        monte_carlo_settings: MonteCarloSettings | None = None,
    ):
        self.measure_settings = measure_settings or MeasureSettings()
        self.monte_carlo_settings = monte_carlo_settings or MonteCarloSettings()

    def detect_order(self, mu: DiscreteMeasure, nu: DiscreteMeasure) -> int:
        """Finite matching order, checked up to the configured cap.

        Raises:
            IndistinguishableMeasuresError: If moments agree through the cap

        """
        order = matching_order(
            mu, nu, self.measure_settings.moment_cap, self.measure_settings.matching_tol
        )
        if is_all_match(order):
            raise IndistinguishableMeasuresError(
                f"Measures indistinguishable to cap {self.measure_settings.moment_cap}"
            )
        return order

    def limit_constants(
        self,
        mu: DiscreteMeasure,
        nu: DiscreteMeasure,
        mc_samples: int | None = None,
        seed: int = 0,
    ) -> LimitConstants:
        """Evaluate every limiting constant for (mu, nu).

        Args:
            mu: First measure
            nu: Second measure
            mc_samples: Monte Carlo draws for the TV constant
            seed: Seed for the Monte Carlo draws

        Returns:
            LimitConstants for the detected matching order n

        Raises:
            IndistinguishableMeasuresError: If no finite matching order exists

        """
        n = self.detect_order(mu, nu)
        samples = (
            self.monte_carlo_settings.c_tv_samples if mc_samples is None else mc_samples
        )
        differences = moment_differences(mu, nu, n + 1)
        mean_gap = float(np.linalg.norm(mu.mean - nu.mean))

        c_chi2 = math.fsum(d * d / alpha.factorial for alpha, d in differences.items())
        # for n = 0 this is the squared mean gap
        c_w2 = c_chi2 / (n + 1)

        c_tv, c_tv_stderr = tv_constant_monte_carlo(differences, mu.dim, samples, seed)
        c_tv_quadrature = None
        if mu.dim == 1:
            (delta,) = differences.values()
            c_tv_quadrature = tv_constant_quadrature_1d(delta, n + 1)

        constants = LimitConstants(
            n=n,
            c_w2=c_w2,
            c_chi2=c_chi2,
            c_kl=c_chi2 / 2,
            c_tv=c_tv,
            c_tv_stderr=c_tv_stderr,
            c_tv_quadrature=c_tv_quadrature,
            mean_gap=mean_gap,
        )
        logger.info(
            f"Limit constants n={n}: c_w2={c_w2:.6g}, c_chi2={c_chi2:.6g}, "
            f"c_tv={c_tv:.6g} +- {c_tv_stderr:.2g}"
        )
        return constants
