"""Distances, divergences and transport bounds between Gaussian-smoothed measures.

DivergenceService wires the solvers of this package to the configured settings:
quantile transport in 1D, debiased Sinkhorn in 1D and 2D, quadrature or Monte
Carlo f-divergences, the chaos-energy upper bounds and the dual lower bound.
"""

import logging
import math

from src.config.settings import (
    ChaosSettings,
    MeasureSettings,
    MonteCarloSettings,
    QuadratureSettings,
    SinkhornSettings,
)
from src.core.errors import IndistinguishableMeasuresError, InvalidInputError
from src.core.models.measure import DiscreteMeasure, is_all_match
from src.core.models.results import DivergenceMethod, DivergenceResult, FDivergenceKind
from src.core.services.measures import matching_order

from .bounds import moser_w2_upper_bound, moser_wp_upper_bound, w1_dual_lower_bound
from .f_divergences import f_divergence_monte_carlo, f_divergence_quadrature
from .quantile_transport import wp_1d
from .sinkhorn import LogDomainSinkhorn, sinkhorn_w2

logger = logging.getLogger(__name__)


class DivergenceService:
    """Numerical distances, divergences and bounds between smoothed measures.

    Binds the solver functions of this package to the configured grids,
    tolerances and budgets.
    """

    def __init__(
        self,
        measure_settings: MeasureSettings | None = None,
        chaos_settings: ChaosSettings | None = None,
        sinkhorn_settings: SinkhornSettings | None = None,
        quadrature_settings: QuadratureSettings | None = None,
        monte_carlo_settings: MonteCarloSettings | None = None,
    ):
        self.measure_settings = measure_settings or MeasureSettings()
        self.chaos_settings = chaos_settings or ChaosSettings()
        self.sinkhorn_settings = sinkhorn_settings or SinkhornSettings()
        self.quadrature_settings = quadrature_settings or QuadratureSettings()
        self.monte_carlo_settings = monte_carlo_settings or MonteCarloSettings()

    def wp_1d(
        self,
        mu: DiscreteMeasure,
        nu: DiscreteMeasure,
        t: float,
        p: float = 1.0,
        grid: int | None = None,
    ) -> DivergenceResult:
        """Exact 1D W_p through quantile functions."""
        return wp_1d(
            mu,
            nu,
            t,
            p=p,
            grid=self.quadrature_settings.wp_grid if grid is None else grid,
            z_max=self.quadrature_settings.wp_z_max,
        )

    def sinkhorn_w2(
        self,
        mu: DiscreteMeasure,
        nu: DiscreteMeasure,
        t: float,
        grid_per_axis: int | None = None,
        eps: float | None = None,
    ) -> DivergenceResult:
        """Debiased entropic approximation of W2^2 in dims 1 and 2."""
        return sinkhorn_w2(mu, nu, t, grid_per_axis, eps, self.sinkhorn_settings)

    def w2_squared(
        self, mu: DiscreteMeasure, nu: DiscreteMeasure, t: float, method: DivergenceMethod
    ) -> DivergenceResult:
        """W2^2 by the exact 1D solver or Sinkhorn, as a squared quantity."""
        if method is DivergenceMethod.SINKHORN:
            return self.sinkhorn_w2(mu, nu, t)
        if method is not DivergenceMethod.EXACT_1D:
            raise InvalidInputError(f"W2^2 cannot be computed with {method.value}")
        result = self.wp_1d(mu, nu, t, p=2.0)
        error = result.error_estimate
        return DivergenceResult(
            value=result.value**2,
            method=result.method,
            error_estimate=None if error is None else 2 * result.value * error + error**2,
            diagnostics={**result.diagnostics, "quantity": "w2sq"},
        )

    def f_divergence(
        self,
        mu: DiscreteMeasure,
        nu: DiscreteMeasure,
        t: float,
        kind: FDivergenceKind,
        method: DivergenceMethod = DivergenceMethod.QUADRATURE,
        budget: int | None = None,
        seed: int = 0,
    ) -> DivergenceResult:
        """chi^2, KL or TV (normalized as (1/2) int |f - g|).

        Args:
            mu: First measure
            nu: Second measure
            t: Bandwidth
            kind: Divergence to compute
            method: QUADRATURE (dims 1, 2) or MONTE_CARLO (any dim)
            budget: Subdivisions or panels for quadrature, samples for Monte Carlo
            seed: Monte Carlo seed

        """
        if method is DivergenceMethod.QUADRATURE:
            return f_divergence_quadrature(
                mu, nu, t, kind, self.quadrature_settings, budget
            )
        if method is DivergenceMethod.MONTE_CARLO:
            return f_divergence_monte_carlo(
                mu,
                nu,
                t,
                kind,
                samples=self.monte_carlo_settings.samples if budget is None else budget,
                seed=seed,
                target_rel_stderr=self.monte_carlo_settings.target_rel_stderr,
            )
        raise InvalidInputError(f"f-divergences cannot use method {method.value}")

    def default_truncation(self, mu: DiscreteMeasure, nu: DiscreteMeasure) -> int:
        """Matching order plus the configured number of extra chaos degrees."""
        order = matching_order(
            mu, nu, self.measure_settings.moment_cap, self.measure_settings.matching_tol
        )
        base = self.measure_settings.moment_cap if is_all_match(order) else order
        return max(base + self.chaos_settings.extra_degrees, 1)

    def moser_w2_upper_bound(
        self,
        mu: DiscreteMeasure,
        nu: DiscreteMeasure,
        t: float,
        max_degree: int | None = None,
    ) -> DivergenceResult:
        """Chaos-energy upper bound on W2^2; needs equal means."""
        return moser_w2_upper_bound(
            mu,
            nu,
            t,
            self.default_truncation(mu, nu) if max_degree is None else max_degree,
            tol=self.measure_settings.matching_tol,
            mean_tol=self.chaos_settings.mean_tol,
        )

    def moser_wp_upper_bound(
        self,
        mu: DiscreteMeasure,
        nu: DiscreteMeasure,
        t: float,
        p: float,
        max_degree: int | None = None,
        nodes_per_axis: int | None = None,
    ) -> DivergenceResult:
        """Upper bound on W_p^p from the gradient of the chaos solution."""
        degree = self.default_truncation(mu, nu) if max_degree is None else max_degree
        return moser_wp_upper_bound(
            mu,
            nu,
            t,
            p,
            degree,
            max(degree + 10, 20) if nodes_per_axis is None else nodes_per_axis,
            self.chaos_settings.quadrature_node_budget,
            tol=self.measure_settings.matching_tol,
            mean_tol=self.chaos_settings.mean_tol,
        )

    def w1_dual_lower_bound(
        self, mu: DiscreteMeasure, nu: DiscreteMeasure, t: float, grid: int | None = None
    ) -> DivergenceResult:
        """Kantorovich-Rubinstein lower bound on W1 with a bump-localized test function."""
        budget = self.chaos_settings.quadrature_node_budget
        if grid is None:
            grid = min(
                self.quadrature_settings.dual_grid, int(budget ** (1.0 / mu.dim))
            )
        return w1_dual_lower_bound(
            mu,
            nu,
            t,
            grid,
            lipschitz_inflation=self.quadrature_settings.lipschitz_inflation,
            budget=budget,
            tol=self.measure_settings.matching_tol,
        )

    def talagrand_ratio(
        self, mu: DiscreteMeasure, nu: DiscreteMeasure, t: float
    ) -> float:
        """W2^2 / ((2t / (n+1)) KL), which tends to 1 as t grows.

        Raises:
            IndistinguishableMeasuresError: If no finite matching order exists

        """
        order = matching_order(
            mu, nu, self.measure_settings.moment_cap, self.measure_settings.matching_tol
        )
        if is_all_match(order):
            raise IndistinguishableMeasuresError(
                f"Measures indistinguishable to cap {self.measure_settings.moment_cap}"
            )
        method = DivergenceMethod.EXACT_1D if mu.dim == 1 else DivergenceMethod.SINKHORN
        w2sq = self.w2_squared(mu, nu, t, method).value
        kl = self.f_divergence(mu, nu, t, FDivergenceKind.KL).value
        if kl <= 0:
            return math.nan
        return w2sq / (2 * t / (order + 1) * kl)


__all__ = [
    "DivergenceService",
    "LogDomainSinkhorn",
    "f_divergence_monte_carlo",
    "f_divergence_quadrature",
    "moser_w2_upper_bound",
    "moser_wp_upper_bound",
    "sinkhorn_w2",
    "w1_dual_lower_bound",
    "wp_1d",
]
