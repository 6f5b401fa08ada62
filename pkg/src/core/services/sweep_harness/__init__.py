"""Bandwidth sweeps, log-log rate fits and pass/fail checks of the asymptotic claims."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import stats

from src.config.settings import MeasureSettings, MonteCarloSettings, SweepSettings
from src.core.errors import FitError, InvalidInputError, SmoothotError
from src.core.models.measure import DiscreteMeasure, is_all_match
from src.core.models.results import (
    DivergenceMethod,
    FDivergenceKind,
    LimitConstants,
    Metric,
    SweepReport,
    SweepRow,
    Theorem,
    VerifyVerdict,
)
from src.core.services.divergences import DivergenceService
from src.core.services.limits import LimitsService, gaussian_w2
from src.core.services.measures import matching_order
from src.core.services.smoothing import derive_seed

logger = logging.getLogger(__name__)

_W2_METHODS = (DivergenceMethod.EXACT_1D, DivergenceMethod.SINKHORN)
_F_METHODS = (DivergenceMethod.QUADRATURE, DivergenceMethod.MONTE_CARLO)

ALLOWED_METHODS: dict[Metric, tuple[DivergenceMethod, ...]] = {
    Metric.W1: (DivergenceMethod.EXACT_1D,),
    Metric.WP: (DivergenceMethod.EXACT_1D,),
    Metric.W2SQ: _W2_METHODS,
    Metric.CHI2: _F_METHODS,
    Metric.KL: _F_METHODS,
    Metric.TV: _F_METHODS,
    Metric.MOSER_W2SQ: (DivergenceMethod.CHAOS_BOUND,),
    Metric.DUAL_W1: (DivergenceMethod.DUAL_BOUND,),
    Metric.W2_SURROGATE_GAP: _W2_METHODS,
    Metric.TALAGRAND_RATIO: _W2_METHODS,
    Metric.MOSER_RATIO: _W2_METHODS,
}

_F_KINDS = {
    Metric.CHI2: FDivergenceKind.CHI2,
    Metric.KL: FDivergenceKind.KL,
    Metric.TV: FDivergenceKind.TV,
}

_LIMIT_THEOREMS = {
    Theorem.W2_LIMIT: Metric.W2SQ,
    Theorem.CHI2_LIMIT: Metric.CHI2,
    Theorem.KL_LIMIT: Metric.KL,
    Theorem.TV_LIMIT: Metric.TV,
    Theorem.ZEROTH_ORDER: Metric.W1,
    Theorem.TALAGRAND: Metric.TALAGRAND_RATIO,
}

_JUDGED_METRICS: dict[Theorem, tuple[Metric, ...]] = {
    **{theorem: (metric,) for theorem, metric in _LIMIT_THEOREMS.items()},
    Theorem.WP_RATE: (Metric.W2SQ, Metric.WP, Metric.W1),
    Theorem.GAUSSIAN_SURROGATE: (Metric.W2_SURROGATE_GAP,),
    Theorem.MOSER_TIGHTNESS: (Metric.MOSER_RATIO,),
}


def default_method(metric: Metric, dim: int) -> DivergenceMethod:
    allowed = ALLOWED_METHODS[metric]
    if allowed == _W2_METHODS:
        return DivergenceMethod.EXACT_1D if dim == 1 else DivergenceMethod.SINKHORN
    if allowed == _F_METHODS:
        return DivergenceMethod.QUADRATURE if dim <= 2 else DivergenceMethod.MONTE_CARLO
    return allowed[0]


def rescale_exponent(metric: Metric, n: int) -> float:
    """Power of t that turns the raw metric into a quantity with a finite limit."""
    if metric in (Metric.W1, Metric.WP, Metric.DUAL_W1):
        return n / 2
    if metric in (Metric.W2SQ, Metric.MOSER_W2SQ):
        return float(n)
    if metric in (Metric.CHI2, Metric.KL):
        return float(n + 1)
    if metric is Metric.TV:
        return (n + 1) / 2
    if metric is Metric.W2_SURROGATE_GAP:
        return 1.0
    return 0.0


def predicted_limit(metric: Metric, constants: LimitConstants) -> float:
    """Limit of the rescaled metric, NaN where no closed form exists."""
    if metric in (Metric.W2SQ, Metric.MOSER_W2SQ):
        return constants.c_w2
    if metric is Metric.CHI2:
        return constants.c_chi2
    if metric is Metric.KL:
        return constants.c_kl
    if metric is Metric.TV:
        return constants.c_tv
    if metric in (Metric.W1, Metric.WP) and constants.n == 0:
        return constants.mean_gap
    if metric in (Metric.TALAGRAND_RATIO, Metric.MOSER_RATIO):
        return 1.0
    return math.nan


def fit_power_law(ts: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    """Slope and its standard error of log(values) against log(ts)."""
    fit = stats.linregress(np.log(ts), np.log(values))
    return float(fit.slope), float(fit.stderr)


def _require_tolerance(rtol: float) -> None:
    if not (math.isfinite(rtol) and rtol >= 0):
        raise InvalidInputError(f"Tolerance must be finite and >= 0, got {rtol}")


class SweepHarnessService:
    """Runs sweeps over geometric bandwidth grids and judges them."""

    def __init__(
        self,
        sweep_settings: SweepSettings | None = None,
        measure_settings: MeasureSettings | None = None,
        monte_carlo_settings: MonteCarloSettings | None = None,
        divergence_service: DivergenceService | None = None,
        limits_service: LimitsService | None = None,
    ):
        self.sweep_settings = sweep_settings or SweepSettings()
        self.measure_settings = measure_settings or MeasureSettings()
        self.monte_carlo_settings = monte_carlo_settings or MonteCarloSettings()
        self.divergences = divergence_service or DivergenceService(
            measure_settings=self.measure_settings,
            monte_carlo_settings=self.monte_carlo_settings,
        )
        self.limits = limits_service or LimitsService(
            self.measure_settings, self.monte_carlo_settings
        )

    def _evaluate(
        self,
        metric: Metric,
        method: DivergenceMethod,
        mu: DiscreteMeasure,
        nu: DiscreteMeasure,
        t: float,
        p: float,
        seed: int,
        budget: int | None,
    ) -> tuple[float, float | None]:
        """Raw metric value and its error estimate at one bandwidth."""
        service = self.divergences
        if metric in _F_KINDS:
            result = service.f_divergence(mu, nu, t, _F_KINDS[metric], method, budget, seed)
            return result.value, result.error_estimate
        if metric is Metric.W2SQ:
            result = service.w2_squared(mu, nu, t, method)
            return result.value, result.error_estimate
        if metric in (Metric.W1, Metric.WP):
            result = service.wp_1d(mu, nu, t, p=1.0 if metric is Metric.W1 else p)
            return result.value, result.error_estimate
        if metric is Metric.MOSER_W2SQ:
            result = service.moser_w2_upper_bound(mu, nu, t)
            return result.value, result.error_estimate
        if metric is Metric.DUAL_W1:
            return service.w1_dual_lower_bound(mu, nu, t).value, None
        if metric is Metric.W2_SURROGATE_GAP:
            w2 = math.sqrt(service.w2_squared(mu, nu, t, method).value)
            return abs(w2 - gaussian_w2(mu, nu, t)), None
        if metric is Metric.TALAGRAND_RATIO:
            return service.talagrand_ratio(mu, nu, t), None
        if metric is Metric.MOSER_RATIO:
            exact = service.w2_squared(mu, nu, t, method).value
            bound = service.moser_w2_upper_bound(mu, nu, t).value
            return (bound / exact if exact > 0 else math.nan), None
        raise InvalidInputError(f"Unknown metric {metric}")

    def sweep(
        self,
        mu: DiscreteMeasure,
        nu: DiscreteMeasure,
        metric: Metric,
        method: DivergenceMethod | None = None,
        t_min: float | None = None,
        t_max: float | None = None,
        points: int | None = None,
        seed: int = 0,
        pair_id: str = "pair",
        p: float = 2.0,
        budget: int | None = None,
    ) -> SweepReport:
        """Evaluate ``metric`` on t_k = t_min (t_max / t_min)^(k / (points - 1)).

        Rows run concurrently with per-row seeds derived from ``seed``. A row
        whose solver fails keeps its error text and is left out of the fit.

        Args:
            mu: First measure
            nu: Second measure
            metric: Quantity to track
            method: Solver, defaults per metric and dimension
            t_min: Smallest bandwidth
            t_max: Largest bandwidth
            points: Number of grid points, at least 3
            seed: Base seed
            pair_id: Label stored in the report
            p: Exponent for the wp metric
            budget: Quadrature or Monte Carlo budget for f-divergences

        Returns:
            SweepReport with rows sorted by t and the fitted exponent

        Raises:
            InvalidInputError: On an invalid grid or method
            IndistinguishableMeasuresError: If the measures match through the cap
            FitError: If fewer than the required rows are valid

        """
        settings = self.sweep_settings
        t_min = settings.t_min if t_min is None else t_min
        t_max = settings.t_max if t_max is None else t_max
        points = settings.points if points is None else points
        if not 0 < t_min < t_max:
            raise InvalidInputError(f"Need 0 < t_min < t_max, got {t_min}, {t_max}")
        if points < 3:
            raise InvalidInputError(f"A sweep needs at least 3 points, got {points}")
        method = default_method(metric, mu.dim) if method is None else method
        if method not in ALLOWED_METHODS[metric]:
            raise InvalidInputError(
                f"Metric {metric.value} cannot be computed with {method.value}"
            )

        constants = self.limits.limit_constants(mu, nu, seed=seed)
        exponent = rescale_exponent(metric, constants.n)
        limit = predicted_limit(metric, constants)
        ts = t_min * (t_max / t_min) ** (np.arange(points) / (points - 1))

        def run_row(index: int) -> SweepRow:
            t = float(ts[index])
            try:
                raw, error = self._evaluate(
                    metric, method, mu, nu, t, p, derive_seed(seed, index), budget
                )
            except SmoothotError as e:
                logger.warning(f"Sweep row t={t:g} for {metric.value} failed: {e}")
                return SweepRow(t, math.nan, exponent, limit, None, str(e))
            return SweepRow(t, raw, exponent, limit, error)

        with ThreadPoolExecutor(max_workers=settings.max_workers) as executor:
            rows = list(executor.map(run_row, range(points)))

        report = SweepReport(
            pair_id=pair_id,
            metric=metric,
            method=method,
            rows=rows,
            matching_order=constants.n,
            p=p if metric is Metric.WP else None,
        )
        valid = len(report.valid_rows)
        if valid < settings.min_valid_rows:
            raise FitError(
                f"Only {valid} valid rows, {settings.min_valid_rows} required"
            )
        try:
            report.fitted_exponent, report.fit_stderr = self.fit_rate(report)
        except FitError as e:
            logger.warning(f"No rate fit for {pair_id}/{metric.value}: {e}")

        logger.info(
            f"Sweep {pair_id}/{metric.value} ({method.value}) n={constants.n}: "
            f"last rescaled={report.rows[-1].rescaled_value:.6g}, "
            f"predicted={limit:.6g}, exponent={report.fitted_exponent:.4f}"
        )
        return report

    def fit_rate(self, report: SweepReport) -> tuple[float, float]:
        """Least-squares slope of log raw_value on log t over valid positive rows.

        Raises:
            FitError: If fewer than the required rows remain

        """
        rows = [row for row in report.valid_rows if row.raw_value > 0]
        if len(rows) < self.sweep_settings.min_valid_rows:
            raise FitError(
                f"{len(rows)} positive rows, {self.sweep_settings.min_valid_rows} required"
            )
        ts = np.array([row.t for row in rows])
        values = np.array([row.raw_value for row in rows])
        return fit_power_law(ts, values)

    def _sweep_plan(
        self, theorem: Theorem, dim: int, n: int, p: float
    ) -> tuple[Metric, DivergenceMethod] | str:
        """Metric and method of the canonical sweep, or a failed precondition tag."""
        if theorem is Theorem.WP_RATE:
            if n < 1:
                return "requires_matching_order_ge_1"
            metric = Metric.W2SQ if p == 2 else Metric.WP
        elif theorem is Theorem.GAUSSIAN_SURROGATE:
            metric = Metric.W2_SURROGATE_GAP
        elif theorem is Theorem.MOSER_TIGHTNESS:
            if n < 1:
                return "requires_equal_means"
            metric = Metric.MOSER_RATIO
        else:
            if theorem is Theorem.ZEROTH_ORDER and n != 0:
                return "requires_unequal_means"
            metric = _LIMIT_THEOREMS[theorem]

        method = default_method(metric, dim)
        if method is DivergenceMethod.EXACT_1D and dim != 1 and metric is not Metric.W2SQ:
            return "requires_dim_1"
        if method is DivergenceMethod.SINKHORN and dim > 2:
            return "requires_dim_le_2"
        return metric, method

    def verify(
        self,
        mu: DiscreteMeasure,
        nu: DiscreteMeasure,
        theorem: Theorem,
        rtol: float | None = None,
        budget: int | None = None,
        seed: int = 0,
        p: float = 2.0,
        pair_id: str = "pair",
    ) -> tuple[VerifyVerdict, SweepReport | None]:
        """Run the canonical sweep for ``theorem`` and judge it.

        Returns:
            Tuple of the verdict and the report it was judged on (None when a
            precondition failed before any sweep)

        """
        rtol = self.sweep_settings.default_rtol if rtol is None else rtol
        _require_tolerance(rtol)
        order = matching_order(
            mu, nu, self.measure_settings.moment_cap, self.measure_settings.matching_tol
        )
        if is_all_match(order):
            return self._precondition_verdict(theorem, rtol, "indistinguishable"), None

        plan = self._sweep_plan(theorem, mu.dim, order, p)
        if isinstance(plan, str):
            return self._precondition_verdict(theorem, rtol, plan), None
        metric, method = plan

        report = self.sweep(
            mu, nu, metric, method, seed=seed, pair_id=pair_id, p=p, budget=budget
        )
        verdict = self.judge(theorem, report, rtol)
        logger.info(
            f"Verdict {theorem.value}: {'pass' if verdict.passed else 'fail'} "
            f"(observed={verdict.observed:.6g}, expected={verdict.expected:.6g})"
        )
        return verdict, report

    def _precondition_verdict(self, theorem: Theorem, rtol: float, tag: str) -> VerifyVerdict:
        logger.warning(f"Precondition {tag} not met for {theorem.value}")
        return VerifyVerdict(
            theorem=theorem,
            passed=False,
            observed=math.nan,
            expected=math.nan,
            rtol=rtol,
            details=f"precondition failed: {tag}",
            precondition=tag,
        )

    def judge(self, theorem: Theorem, report: SweepReport, rtol: float) -> VerifyVerdict:
        """Verdict computed from the report alone, so persisted reports can be re-judged."""
        _require_tolerance(rtol)
        if report.metric not in _JUDGED_METRICS[theorem]:
            return self._precondition_verdict(
                theorem, rtol, f"report_metric_{report.metric.value}"
            )
        valid = report.valid_rows
        if not valid:
            return self._precondition_verdict(theorem, rtol, "no_valid_rows")
        first, last = valid[0], valid[-1]

        if theorem is Theorem.WP_RATE:
            atol = self.sweep_settings.rate_atol
            expected = -last.rescale_exponent
            observed = report.fitted_exponent
            passed = bool(math.isfinite(observed) and abs(observed - expected) <= atol)
            details = f"fitted exponent vs -{last.rescale_exponent:g}, atol={atol}"
            return VerifyVerdict(theorem, passed, observed, expected, atol, details)

        if theorem is Theorem.GAUSSIAN_SURROGATE:
            expected = 2 * first.rescaled_value
            peak = max(valid, key=lambda row: row.rescaled_value)
            observed = peak.rescaled_value
            passed = bool(observed <= expected)
            details = (
                f"largest t*|W2 - gaussian W2| (at t={peak.t:g}) vs twice its value "
                f"at t={first.t:g}"
            )
            return VerifyVerdict(theorem, passed, observed, expected, rtol, details)

        if theorem is Theorem.MOSER_TIGHTNESS:
            observed = last.raw_value
            passed = bool(1.0 - 1e-9 <= observed <= 1.0 + rtol)
            details = f"bound / W2^2 at t={last.t:g} within [1, 1 + rtol]"
            return VerifyVerdict(theorem, passed, observed, 1.0, rtol, details)

        observed = last.rescaled_value
        expected = last.predicted_limit
        passed = bool(
            math.isfinite(expected) and abs(observed - expected) <= rtol * abs(expected)
        )
        details = (
            f"{report.metric.value} rescaled by t^{last.rescale_exponent:g} at t={last.t:g}"
        )
        return VerifyVerdict(theorem, passed, observed, expected, rtol, details)
