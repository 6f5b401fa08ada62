import importlib
import math

import numpy as np
import pytest
from scipy import stats

from src.config.settings import ChaosSettings, MonteCarloSettings
from src.core.errors import InvalidInputError, QuadratureBudgetError, UnequalMeansError
from src.core.models.measure import DiscreteMeasure
from src.core.models.results import DivergenceMethod, FDivergenceKind
from src.core.models.smoothed import SmoothedMeasure
from src.core.services.divergences import DivergenceService, w1_dual_lower_bound
from src.core.services.divergences.bounds import bump
from src.core.services.measures import translate
from src.core.services.smoothing import density


@pytest.fixture
def service() -> DivergenceService:
    return DivergenceService(monte_carlo_settings=MonteCarloSettings(samples=200_000))


class TestWp1d:
    """Test exact 1D transport through quantile functions."""

    @pytest.mark.parametrize("p", [1.0, 2.0, 3.0])
    def test_translation_moves_by_its_length(self, service, pair_c, p):
        """Test W_p(rho_t, rho_t(. - 1)) = 1 for every p."""
        result = service.wp_1d(*pair_c, 7.0, p=p)
        assert result.value == pytest.approx(1.0, rel=1e-10)
        assert result.method is DivergenceMethod.EXACT_1D

    def test_pair_a_w2_squared_decay(self, service, pair_a):
        """Test W2^2 ~ c_w2 / t at t = 10^4."""
        result = service.w2_squared(*pair_a, 1e4, DivergenceMethod.EXACT_1D)
        assert result.value == pytest.approx(0.25 / 1e4, rel=0.03)
        assert result.diagnostics["quantity"] == "w2sq"

    def test_identical_measures_have_zero_distance(self, service, pair_b):
        """Test W_p(mu, mu) = 0."""
        assert service.wp_1d(pair_b[0], pair_b[0], 2.0, p=2.0).value == pytest.approx(
            0.0, abs=1e-12
        )

    def test_w1_below_w2(self, service, pair_b):
        """Test monotonicity of W_p in p."""
        w1 = service.wp_1d(*pair_b, 5.0, p=1.0).value
        w2 = service.wp_1d(*pair_b, 5.0, p=2.0).value
        assert w1 <= w2 * (1 + 1e-9)

    @pytest.mark.parametrize("pair", ["pair_a", "pair_b"])
    def test_nondecreasing_in_p(self, service, request, pair):
        """Test W_1 <= W_1.5 <= W_2 <= W_3 at fixed bandwidth."""
        mu, nu = request.getfixturevalue(pair)
        values = [service.wp_1d(mu, nu, 5.0, p=p).value for p in (1.0, 1.5, 2.0, 3.0)]
        for lower, upper in zip(values[:-1], values[1:], strict=True):
            assert lower <= upper * (1 + 1e-9)

    @pytest.mark.parametrize("p", [1.0, 2.0])
    def test_common_translation_changes_nothing(self, service, pair_b, p):
        """Test W_p(mu + v, nu + v) = W_p(mu, nu) to 1e-9."""
        mu, nu = pair_b
        shifted = service.wp_1d(translate(mu, [3.7]), translate(nu, [3.7]), 10.0, p=p)
        assert shifted.value == pytest.approx(
            service.wp_1d(mu, nu, 10.0, p=p).value, abs=1e-9
        )

    def test_error_estimate_is_reported(self, service, pair_a):
        """Test a small, non-negative error estimate."""
        result = service.wp_1d(*pair_a, 100.0, p=2.0)
        assert 0 <= result.error_estimate < 1e-3 * result.value

    def test_planar_measures_are_rejected(self, service, pair_2d):
        """Test that the quantile solver needs dim 1."""
        with pytest.raises(InvalidInputError):
            service.wp_1d(*pair_2d, 1.0)

    def test_exponent_below_one_is_rejected(self, service, pair_a):
        """Test that p < 1 raises."""
        with pytest.raises(InvalidInputError):
            service.wp_1d(*pair_a, 1.0, p=0.5)

    def test_matches_network_simplex_oracle(self, service, pair_a):
        """Test W2^2 against exact transport between fine histograms."""
        ot = pytest.importorskip("ot")
        x = np.linspace(-9, 9, 1201)
        a = density(SmoothedMeasure(pair_a[0], 1.0), x)
        b = density(SmoothedMeasure(pair_a[1], 1.0), x)
        cost = ot.dist(x.reshape(-1, 1), x.reshape(-1, 1))
        oracle = ot.emd2(a / a.sum(), b / b.sum(), cost, numItermax=1_000_000)
        exact = service.w2_squared(*pair_a, 1.0, DivergenceMethod.EXACT_1D).value
        assert exact == pytest.approx(oracle, rel=0.02)


class TestSinkhorn:
    """Test the debiased entropic solver."""

    def test_one_dimensional_matches_exact(self, service, pair_a):
        """Test Sinkhorn against the quantile solver at t = 100."""
        exact = service.w2_squared(*pair_a, 100.0, DivergenceMethod.EXACT_1D).value
        approx = service.w2_squared(*pair_a, 100.0, DivergenceMethod.SINKHORN)
        assert approx.value == pytest.approx(exact, rel=0.05)
        assert approx.diagnostics["marginal_violation"] <= 1e-9

    def test_translation_is_exact(self, service, pair_c):
        """Test that a unit shift costs 1 at any bandwidth."""
        assert service.sinkhorn_w2(*pair_c, 10.0).value == pytest.approx(1.0, rel=0.02)

    def test_planar_pair_matches_embedded_line(self, service, pair_a, pair_2d):
        """Test the 2D solver on a pair that differs along one axis only."""
        exact = service.w2_squared(*pair_a, 100.0, DivergenceMethod.EXACT_1D).value
        planar = service.sinkhorn_w2(*pair_2d, 100.0).value
        assert planar == pytest.approx(exact, rel=0.15)

    @pytest.mark.parametrize("pair", ["pair_b", "pair_2d"])
    def test_identical_measures_cost_nothing(self, service, request, pair):
        """Test that the debiased divergence of mu with itself is zero."""
        mu = request.getfixturevalue(pair)[0]
        assert service.sinkhorn_w2(mu, mu, 10.0).value == pytest.approx(0.0, abs=1e-8)

    def test_three_dimensions_are_rejected(self, service):
        """Test that the grid solver stops at dim 2."""
        mu = DiscreteMeasure.dirac((0.0, 0.0, 0.0))
        nu = DiscreteMeasure.dirac((1.0, 0.0, 0.0))
        with pytest.raises(InvalidInputError):
            service.sinkhorn_w2(mu, nu, 1.0)

    def test_unknown_method_is_rejected(self, service, pair_a):
        """Test that W2^2 cannot come from a divergence solver."""
        with pytest.raises(InvalidInputError):
            service.w2_squared(*pair_a, 1.0, DivergenceMethod.QUADRATURE)


class TestFDivergences:
    """Test chi^2, KL and TV."""

    def test_chi2_limit_of_pair_a(self, service, pair_a):
        """Test t^2 chi^2 -> 1/2."""
        t = 1e4
        result = service.f_divergence(*pair_a, t, FDivergenceKind.CHI2)
        assert result.value * t**2 == pytest.approx(0.5, rel=0.05)
        assert result.method is DivergenceMethod.QUADRATURE

    def test_kl_limit_of_pair_a(self, service, pair_a):
        """Test t^2 KL -> 1/4."""
        t = 1e4
        result = service.f_divergence(*pair_a, t, FDivergenceKind.KL)
        assert result.value * t**2 == pytest.approx(0.25, rel=0.05)

    def test_tv_limit_of_pair_a(self, service, pair_a):
        """Test t TV -> phi(1)."""
        t = 1e4
        result = service.f_divergence(*pair_a, t, FDivergenceKind.TV)
        assert result.value * t == pytest.approx(stats.norm.pdf(1.0), rel=0.02)
        assert result.diagnostics["breakpoints"] == 2

    def test_tv_of_separated_pair_is_bounded(self, service):
        """Test 0 < TV < 1 with the one-half normalization."""
        mu, nu = DiscreteMeasure.dirac(0.0), DiscreteMeasure.dirac(3.0)
        result = service.f_divergence(mu, nu, 1.0, FDivergenceKind.TV)
        assert result.value == pytest.approx(2 * stats.norm.cdf(1.5) - 1, rel=1e-8)

    def test_translation_chi2_closed_form(self, service, pair_c):
        """Test chi^2(N(0,t), N(1,t)) = exp(1/t) - 1."""
        result = service.f_divergence(*pair_c, 2.0, FDivergenceKind.CHI2)
        assert result.value == pytest.approx(math.expm1(0.5), rel=1e-8)

    @pytest.mark.parametrize("method", [DivergenceMethod.QUADRATURE, DivergenceMethod.MONTE_CARLO])
    def test_translation_kl_closed_form(self, service, pair_c, method):
        """Test KL(N(0,t), N(1,t)) = 1 / 2t through the kl_div integrand."""
        result = service.f_divergence(*pair_c, 2.0, FDivergenceKind.KL, method, seed=5)
        tolerance = 1e-8 if method is DivergenceMethod.QUADRATURE else 5 * result.error_estimate
        assert result.value == pytest.approx(0.25, abs=tolerance)

    def test_planar_quadrature_matches_one_dimensional(self, service, pair_a, pair_2d):
        """Test the tensor panel rule on an embedded pair."""
        line = service.f_divergence(*pair_a, 100.0, FDivergenceKind.CHI2).value
        plane = service.f_divergence(*pair_2d, 100.0, FDivergenceKind.CHI2).value
        assert plane == pytest.approx(line, rel=1e-5)

    @pytest.mark.parametrize("kind", list(FDivergenceKind))
    def test_monte_carlo_of_identical_measures_is_zero(self, service, pair_b, kind):
        """Test an exact zero for mu = nu."""
        result = service.f_divergence(
            pair_b[0], pair_b[0], 3.0, kind, DivergenceMethod.MONTE_CARLO, budget=1000
        )
        assert result.value == 0.0

    @pytest.mark.parametrize("kind", list(FDivergenceKind))
    def test_monte_carlo_agrees_with_quadrature(self, service, pair_a, kind):
        """Test the importance sampler within five standard errors."""
        exact = service.f_divergence(*pair_a, 10.0, kind).value
        estimate = service.f_divergence(
            *pair_a, 10.0, kind, DivergenceMethod.MONTE_CARLO, seed=3
        )
        assert abs(estimate.value - exact) <= 5 * estimate.error_estimate

    def test_monte_carlo_is_seeded(self, service, pair_b):
        """Test identical estimates for the same seed."""
        args = (*pair_b, 2.0, FDivergenceKind.KL, DivergenceMethod.MONTE_CARLO, 5000, 8)
        assert service.f_divergence(*args).value == service.f_divergence(*args).value

    def test_quadrature_refuses_three_dimensions(self, service):
        """Test that deterministic quadrature stops at dim 2."""
        mu = DiscreteMeasure.dirac((0.0, 0.0, 0.0))
        nu = DiscreteMeasure.dirac((1.0, 0.0, 0.0))
        with pytest.raises(InvalidInputError):
            service.f_divergence(mu, nu, 1.0, FDivergenceKind.KL)

    def test_transport_method_is_rejected(self, service, pair_a):
        """Test that f-divergences have no Sinkhorn route."""
        with pytest.raises(InvalidInputError):
            service.f_divergence(
                *pair_a, 1.0, FDivergenceKind.KL, DivergenceMethod.SINKHORN
            )


class TestMoserBounds:
    """Test the chaos-energy upper bounds."""

    def test_pair_a_value_at_100(self, service, pair_a):
        """Test exp(1/200) / 400 plus negligible higher chaos."""
        result = service.moser_w2_upper_bound(*pair_a, 100.0)
        assert result.value == pytest.approx(0.0025125, rel=1e-4)
        assert result.method is DivergenceMethod.CHAOS_BOUND

    def test_bound_dominates_and_is_tight(self, service, pair_a):
        """Test 1 <= bound / W2^2 <= 1.01 at t = 10^4."""
        t = 1e4
        bound = service.moser_w2_upper_bound(*pair_a, t).value
        exact = service.w2_squared(*pair_a, t, DivergenceMethod.EXACT_1D).value
        assert 1 - 1e-6 <= bound / exact <= 1.01

    def test_wp_form_reduces_to_energy_at_p_two(self, service, pair_b):
        """Test that the gradient integral equals the Dirichlet energy for p = 2."""
        energy = service.moser_w2_upper_bound(*pair_b, 50.0).value
        gradient = service.moser_wp_upper_bound(*pair_b, 50.0, p=2.0).value
        assert gradient == pytest.approx(energy, rel=1e-8)

    def test_unequal_means_are_rejected(self, service, pair_c):
        """Test that n = 0 pairs have no chaos bound."""
        with pytest.raises(UnequalMeansError):
            service.moser_w2_upper_bound(*pair_c, 10.0)

    def test_error_estimate_covers_truncation(self, service, pair_b):
        """Test that the reported tail bound is non-negative and small."""
        result = service.moser_w2_upper_bound(*pair_b, 100.0)
        assert 0 <= result.error_estimate < 1e-3 * result.value


class TestDualBound:
    """Test the Kantorovich-Rubinstein lower bound on W1."""

    def test_lower_bound_below_w1(self, service, pair_a):
        """Test 0 < bound <= W1 at moderate bandwidth."""
        t = 10.0
        bound = service.w1_dual_lower_bound(*pair_a, t).value
        w1 = service.wp_1d(*pair_a, t, p=1.0).value
        assert 0 < bound <= w1

    def test_decays_like_w1(self, service, pair_a):
        """Test that sqrt(t) * bound stays of order one."""
        t = 1e3
        bound = service.w1_dual_lower_bound(*pair_a, t).value
        assert 0.01 < bound * math.sqrt(t) < 1.0

    def test_grid_budget_is_enforced(self, pair_2d):
        """Test QuadratureBudgetError when grid^d exceeds the budget."""
        with pytest.raises(QuadratureBudgetError):
            w1_dual_lower_bound(*pair_2d, 10.0, grid=2001, budget=10_000)

    def test_planar_grid_stays_within_budget(self, pair_2d):
        """Test that the default planar grid is rounded down to an odd count."""
        service = DivergenceService(
            chaos_settings=ChaosSettings(quadrature_node_budget=10_000)
        )
        result = service.w1_dual_lower_bound(*pair_2d, 10.0)
        assert result.diagnostics["grid"] == 99
        assert result.diagnostics["grid"] ** 2 <= 10_000
        assert result.value > 0

    def test_odd_grid_is_kept(self, pair_a):
        """Test that an odd request is used as given."""
        result = w1_dual_lower_bound(*pair_a, 10.0, grid=201)
        assert result.diagnostics["grid"] == 201

    def test_bump_shape(self):
        """Test bump = 1 inside radius 1, 0 beyond 2, slope at most 2."""
        y = np.linspace(-3, 3, 6001).reshape(-1, 1)
        values, gradients = bump(y)
        radius = np.abs(y[:, 0])
        assert np.all(values[radius <= 1] == 1.0)
        assert np.all(values[radius >= 2] == 0.0)
        assert np.all((values >= 0) & (values <= 1))
        assert float(np.max(np.abs(gradients))) <= 2.0 + 1e-9


class TestBoundOrdering:
    """Test dual bound <= W1 <= W2 <= sqrt(chaos bound) on 1D pairs."""

    @pytest.mark.parametrize("pair", ["pair_a", "pair_b"])
    @pytest.mark.parametrize("t", [10.0, 100.0])
    def test_chain_of_bounds(self, service, request, pair, t):
        """Test the full ordering at one bandwidth."""
        mu, nu = request.getfixturevalue(pair)
        dual = service.w1_dual_lower_bound(mu, nu, t).value
        w1 = service.wp_1d(mu, nu, t, p=1.0).value
        w2 = service.wp_1d(mu, nu, t, p=2.0).value
        moser = service.moser_w2_upper_bound(mu, nu, t).value
        assert dual <= w1 * (1 + 1e-9)
        assert w1 <= w2 * (1 + 1e-9)
        assert w2 <= math.sqrt(moser) * (1 + 1e-9)


class TestTalagrandRatio:
    """Test W2^2 against the KL transport-entropy scale."""

    def test_ratio_tends_to_one(self, service, pair_a):
        """Test the ratio at t = 10^3 for pair A."""
        assert service.talagrand_ratio(*pair_a, 1e3) == pytest.approx(1.0, rel=0.05)


class TestServicePackages:
    """Test the service package surface."""

    @pytest.mark.parametrize(
        "name",
        ["divergences", "hermite_chaos", "limits", "measures", "smoothing", "sweep_harness"],
    )
    def test_every_package_has_a_docstring(self, name):
        """Test that each service package documents itself."""
        module = importlib.import_module(f"src.core.services.{name}")
        assert module.__doc__ and module.__doc__.strip()
