"""chi^2, KL and TV between smoothed measures by quadrature or Monte Carlo.

All three are invariant under the common rescaling x -> x / sqrt(t), so the
integrals run over unit-bandwidth mixtures. The chi^2 and TV integrands are
written through expm1(log f - log g) so that nearly equal densities do not
cancel; the KL integrand is scipy.special.kl_div(f, g) = f log(f / g) - f + g,
which is nonnegative pointwise and integrates to KL.
"""

import logging
import math

import numpy as np
from numpy.polynomial import legendre
from scipy import integrate, optimize, special

from src.config.settings import QuadratureSettings
from src.core.errors import InvalidInputError
from src.core.models.measure import DiscreteMeasure
from src.core.models.results import DivergenceMethod, DivergenceResult, FDivergenceKind
from src.core.models.smoothed import SmoothedMeasure
from src.core.services.smoothing import log_density, sample

logger = logging.getLogger(__name__)

_GAUSS_LEGENDRE_ORDER = 8
_SIGN_SCAN_POINTS = 4001


def _integrand_values(
    kind: FDivergenceKind, log_f: np.ndarray, log_g: np.ndarray
) -> np.ndarray:
    """Pointwise integrand of the divergence, as a density in x."""
    u = log_f - log_g
    g = np.exp(log_g)
    if kind is FDivergenceKind.CHI2:
        return g * np.expm1(u) ** 2
    if kind is FDivergenceKind.KL:
        return special.kl_div(np.exp(log_f), g)
    return 0.5 * g * np.abs(np.expm1(u))


def _scaled_pair(
    mu: DiscreteMeasure, nu: DiscreteMeasure, t: float
) -> tuple[SmoothedMeasure, SmoothedMeasure]:
    if t <= 0:
        raise InvalidInputError(f"Bandwidth must be positive, got {t}")
    if mu.dim != nu.dim:
        raise InvalidInputError(f"Dimension mismatch: {mu.dim} vs {nu.dim}")
    scale = 1.0 / math.sqrt(t)
    return (
        SmoothedMeasure(mu.scaled(scale), 1.0),
        SmoothedMeasure(nu.scaled(scale), 1.0),
    )


def _bounds(smu: SmoothedMeasure, snu: SmoothedMeasure, sigmas: float) -> np.ndarray:
    atoms = np.vstack([smu.base.locations, snu.base.locations])
    return np.stack([atoms.min(axis=0) - sigmas, atoms.max(axis=0) + sigmas], axis=1)


def _sign_changes(
    smu: SmoothedMeasure, snu: SmoothedMeasure, lo: float, hi: float
) -> list[float]:
    """Roots of log f - log g on [lo, hi], located by a scan then brentq."""

    def gap(x: float) -> float:
        return log_density(smu, x) - log_density(snu, x)

    xs = np.linspace(lo, hi, _SIGN_SCAN_POINTS)
    values = log_density(smu, xs) - log_density(snu, xs)
    roots = []
    for i in np.nonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0)[0]:
        roots.append(optimize.brentq(gap, xs[i], xs[i + 1], xtol=1e-14))
    return roots


def _tail_bound(
    kind: FDivergenceKind,
    smu: SmoothedMeasure,
    snu: SmoothedMeasure,
    edges: np.ndarray,
    sigmas: float,
) -> float:
    """Gaussian-tail bound on the integrand mass outside the integration box."""
    tail = smu.dim * 2 * special.ndtr(-sigmas)
    if kind is FDivergenceKind.TV:
        return tail
    corners = np.array(np.meshgrid(*edges, indexing="ij")).reshape(smu.dim, -1).T
    ratio = float(np.max(np.abs(log_density(smu, corners) - log_density(snu, corners))))
    return tail * math.exp(min(2 * ratio, 700.0))


def f_divergence_quadrature(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    t: float,
    kind: FDivergenceKind,
    settings: QuadratureSettings,
    budget: int | None = None,
) -> DivergenceResult:
    """Deterministic quadrature in dims 1 (adaptive) and 2 (Gauss-Legendre panels).

    Args:
        mu: First measure
        nu: Second measure
        t: Bandwidth
        kind: Which divergence
        settings: Quadrature settings
        budget: Subdivision limit in 1D, panels per axis in 2D

    Returns:
        DivergenceResult; diagnostics["flagged"] is set when the tolerance
        was not reached within the budget

    """
    smu, snu = _scaled_pair(mu, nu, t)
    if smu.dim > 2:
        raise InvalidInputError("Quadrature supports dims 1 and 2; use montecarlo")
    edges = _bounds(smu, snu, settings.f_div_sigmas)
    tail = _tail_bound(kind, smu, snu, edges, settings.f_div_sigmas)

    if smu.dim == 1:
        limit = settings.f_div_limit if budget is None else budget
        value, error, diagnostics = _quadrature_1d(
            smu, snu, kind, edges[0], settings, limit
        )
    else:
        panels = settings.panels_2d if budget is None else budget
        value, error, diagnostics = _quadrature_2d(smu, snu, kind, edges, panels)
    diagnostics["tail_bound"] = tail
    return DivergenceResult(
        value=value,
        method=DivergenceMethod.QUADRATURE,
        error_estimate=error + tail,
        diagnostics=diagnostics,
    )


def _quadrature_1d(
    smu: SmoothedMeasure,
    snu: SmoothedMeasure,
    kind: FDivergenceKind,
    edges: np.ndarray,
    settings: QuadratureSettings,
    limit: int,
) -> tuple[float, float, dict]:
    lo, hi = float(edges[0]), float(edges[1])

    def integrand(x: float) -> float:
        return float(
            _integrand_values(
                kind, np.array(log_density(smu, x)), np.array(log_density(snu, x))
            )
        )

    breakpoints = _sign_changes(smu, snu, lo, hi) if kind is FDivergenceKind.TV else []
    result = integrate.quad(
        integrand,
        lo,
        hi,
        points=breakpoints or None,
        epsabs=0.0,
        epsrel=settings.f_div_epsrel,
        limit=max(limit, len(breakpoints) + 2),
        full_output=1,
    )
    value, error, info = result[0], result[1], result[2]
    flagged = len(result) > 3
    if flagged:
        logger.warning(f"Adaptive quadrature stopped early: {result[3].splitlines()[0]}")
    return (
        value,
        error,
        {"evaluations": int(info["neval"]), "breakpoints": len(breakpoints), "flagged": flagged},
    )


def _panel_rule(lo: float, hi: float, panels: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = legendre.leggauss(_GAUSS_LEGENDRE_ORDER)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    points = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    point_weights = (half[:, None] * weights[None, :]).ravel()
    return points, point_weights


def _tensor_panel_integral(
    smu: SmoothedMeasure,
    snu: SmoothedMeasure,
    kind: FDivergenceKind,
    edges: np.ndarray,
    panels: int,
) -> float:
    (x, wx), (y, wy) = (_panel_rule(lo, hi, panels) for lo, hi in edges)
    grid_x, grid_y = np.meshgrid(x, y, indexing="ij")
    points = np.stack([grid_x.ravel(), grid_y.ravel()], axis=-1)
    values = _integrand_values(
        kind, log_density(smu, points), log_density(snu, points)
    ).reshape(grid_x.shape)
    return float(wx @ values @ wy)


def _quadrature_2d(
    smu: SmoothedMeasure,
    snu: SmoothedMeasure,
    kind: FDivergenceKind,
    edges: np.ndarray,
    panels: int,
) -> tuple[float, float, dict]:
    fine = _tensor_panel_integral(smu, snu, kind, edges, panels)
    coarse = _tensor_panel_integral(smu, snu, kind, edges, max(panels // 2, 1))
    nodes = (panels * _GAUSS_LEGENDRE_ORDER) ** 2
    return fine, abs(fine - coarse), {"nodes": nodes, "flagged": False}


def f_divergence_monte_carlo(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    t: float,
    kind: FDivergenceKind,
    samples: int,
    seed: int,
    target_rel_stderr: float = 0.01,
) -> DivergenceResult:
    """Importance sampling from the balanced mixture m = (f + g) / 2.

    The estimator averages integrand / m over draws from m, so it stays
    bounded for all three divergences. The standard error is reported as the
    error estimate and flagged when it exceeds ``target_rel_stderr`` * value.
    """
    smu, snu = _scaled_pair(mu, nu, t)
    if samples < 2:
        raise InvalidInputError(f"Need at least 2 samples, got {samples}")

    balanced = DiscreteMeasure(
        np.vstack([smu.base.locations, snu.base.locations]),
        np.concatenate([smu.base.weights, snu.base.weights]) / 2,
    )
    points = sample(SmoothedMeasure(balanced, 1.0), samples, seed)
    log_f = log_density(smu, points)
    log_g = log_density(snu, points)
    log_m = np.logaddexp(log_f, log_g) - math.log(2.0)

    # integrand / m is the integrand with both densities divided by m
    terms = _integrand_values(kind, log_f - log_m, log_g - log_m)

    value = float(terms.mean())
    stderr = float(terms.std(ddof=1) / math.sqrt(samples))
    flagged = stderr > target_rel_stderr * value
    if flagged:
        logger.warning(
            f"Monte Carlo {kind.value} at t={t:g}: stderr {stderr:.2e} exceeds "
            f"{target_rel_stderr:.0%} of {value:.3e}"
        )
    return DivergenceResult(
        value=value,
        method=DivergenceMethod.MONTE_CARLO,
        error_estimate=stderr,
        diagnostics={"samples": samples, "seed": seed, "flagged": flagged},
    )
