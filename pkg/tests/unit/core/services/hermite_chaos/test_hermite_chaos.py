import math

import numpy as np
import pytest

from src.core.errors import InvalidInputError, QuadratureBudgetError
from src.core.models.chaos import ChaosExpansion
from src.core.models.measure import DiscreteMeasure, MultiIndex, enumerate_multi_indices
from src.core.services.hermite_chaos import (
    chaos_coefficients,
    chaos_evaluate,
    chaos_gradient,
    chaos_tail_bound,
    degree_slice,
    dirichlet_energy,
    gauss_hermite_rule,
    hermite_1d,
    hermite_eval,
    leading_slice_constant,
    ou_apply,
    ou_inverse,
    project_numeric,
    tensor_rule,
    theta_l2,
)
from src.core.services.smoothing import theta_pointwise


def _expansion(coeffs: dict[tuple[int, ...], float], max_degree: int = 6) -> ChaosExpansion:
    dim = len(next(iter(coeffs))) if coeffs else 1
    return ChaosExpansion(
        dim=dim,
        max_degree=max_degree,
        coeffs={MultiIndex(alpha): c for alpha, c in coeffs.items()},
    )


class TestHermitePolynomials:
    """Test probabilists' Hermite polynomials."""

    def test_constant_polynomial(self):
        """Test H_0 = 1."""
        assert hermite_eval(MultiIndex.of(0), 3.7) == 1.0

    def test_second_degree_at_origin(self):
        """Test H_2(0) = -1."""
        assert hermite_eval(MultiIndex.of(2), 0.0) == pytest.approx(-1.0)

    def test_third_degree_at_two(self):
        """Test H_3(2) = 8 - 6 = 2."""
        assert hermite_eval(MultiIndex.of(3), 2.0) == pytest.approx(2.0)

    def test_recurrence_matches_explicit_forms(self):
        """Test H_4 = x^4 - 6x^2 + 3 and H_5 = x^5 - 10x^3 + 15x on a grid."""
        x = np.linspace(-3, 3, 13)
        np.testing.assert_allclose(hermite_1d(4, x), x**4 - 6 * x**2 + 3, atol=1e-12)
        np.testing.assert_allclose(hermite_1d(5, x), x**5 - 10 * x**3 + 15 * x, atol=1e-11)

    def test_product_over_axes(self):
        """Test H_(1,2)(x, y) = x (y^2 - 1)."""
        points = np.array([[1.5, 2.0], [-0.5, 0.0]])
        np.testing.assert_allclose(
            hermite_eval(MultiIndex.of(1, 2), points), [1.5 * 3.0, 0.5]
        )

    @pytest.mark.parametrize(
        ("y", "atol"),
        [
            ((0.5,), 1e-6),
            ((-0.5,), 1e-6),
            ((1.0,), 1e-4),
            ((0.3, -0.2), 1e-6),
        ],
    )
    def test_generating_function(self, y, atol):
        """Test sum_{|alpha| <= 12} y^alpha H_alpha(x) / alpha! against eta(x, y)."""
        y = np.array(y)
        dim = y.shape[0]
        s = np.linspace(-2, 2, 41)
        x = s.reshape(-1, 1) if dim == 1 else np.stack([s, -s / 2], axis=-1) * 0.8
        series = sum(
            alpha.monomial(y.reshape(1, -1))[0] * hermite_eval(alpha, x) / alpha.factorial
            for alpha in enumerate_multi_indices(dim, 12)
        )
        eta = np.exp(x @ y - 0.5 * float(y @ y))
        np.testing.assert_allclose(series, eta, rtol=0, atol=atol)

    def test_negative_degree_is_rejected(self):
        """Test that H_-1 raises."""
        with pytest.raises(InvalidInputError):
            hermite_1d(-1, 0.0)


class TestGaussHermiteRule:
    """Test Gauss-Hermite quadrature for the standard Gaussian."""

    def test_single_node_rule(self):
        """Test m = 1 gives node 0 with weight 1."""
        rule = gauss_hermite_rule(1)
        assert rule.nodes.tolist() == [0.0]
        assert rule.weights.tolist() == [1.0]

    def test_two_node_rule(self):
        """Test m = 2 gives nodes +-1 with weights 1/2."""
        rule = gauss_hermite_rule(2)
        np.testing.assert_allclose(np.sort(rule.nodes), [-1.0, 1.0], atol=1e-14)
        np.testing.assert_allclose(rule.weights, [0.5, 0.5], atol=1e-14)

    @pytest.mark.parametrize("m", [2, 3, 5, 10, 20])
    def test_second_moment_is_one(self, m):
        """Test that every rule integrates x^2 exactly."""
        rule = gauss_hermite_rule(m)
        assert rule.integrate(rule.nodes**2) == pytest.approx(1.0, rel=1e-12)

    def test_exact_to_degree_two_m_minus_one(self):
        """Test even Gaussian moments (2k-1)!! through degree 2m - 1."""
        rule = gauss_hermite_rule(6)
        for k in range(6):
            expected = math.prod(range(1, 2 * k, 2)) if k else 1
            assert float(rule.weights @ rule.nodes ** (2 * k)) == pytest.approx(
                expected, rel=1e-11
            )

    @pytest.mark.parametrize("dim", [1, 2])
    def test_orthogonality(self, dim):
        """Test int H_a H_b dg = a! [a = b] for |a|, |b| <= 5 on the line and the plane."""
        points, weights = tensor_rule(dim, 6)
        indices = enumerate_multi_indices(dim, 5)
        values = {alpha: hermite_eval(alpha, points) for alpha in indices}
        for a in indices:
            for b in indices:
                integral = float(weights @ (values[a] * values[b]))
                expected = float(a.factorial) if a == b else 0.0
                assert integral == pytest.approx(expected, abs=1e-10 * max(1.0, expected))

    def test_tensor_grid_respects_budget(self):
        """Test that an oversized grid raises before allocating."""
        with pytest.raises(QuadratureBudgetError):
            tensor_rule(3, 200, budget=1000)

    def test_zero_nodes_is_rejected(self):
        """Test that m < 1 raises."""
        with pytest.raises(InvalidInputError):
            gauss_hermite_rule(0)


class TestChaosCoefficients:
    """Test the closed-form chaos coefficients of Theta_t."""

    def test_pair_a_at_t_100(self, pair_a):
        """Test c_2 = 0.05 and c_4 = 1/24000 with odd degrees absent."""
        theta = chaos_coefficients(*pair_a, 100.0, 4)
        assert theta.coeff(MultiIndex.of(2)) == pytest.approx(0.05)
        assert theta.coeff(MultiIndex.of(4)) == pytest.approx(1 / 24000)
        assert theta.coeff(MultiIndex.of(1)) == 0.0
        assert theta.coeff(MultiIndex.of(3)) == 0.0

    def test_identical_measures_give_zero(self, pair_b):
        """Test that mu = nu has no coefficients."""
        theta = chaos_coefficients(pair_b[0], pair_b[0], 10.0, 6)
        assert all(c == 0.0 for _, c in theta.items())

    def test_translation_at_unit_bandwidth(self, pair_c):
        """Test c_1 = -1 for d_0 against d_1 at t = 1."""
        theta = chaos_coefficients(*pair_c, 1.0, 1)
        assert theta.coeff(MultiIndex.of(1)) == pytest.approx(-1.0)

    def test_agrees_with_numeric_projection(self, pair_a):
        """Test the closed form against quadrature of Theta_t itself."""
        t = 100.0
        closed = chaos_coefficients(*pair_a, t, 6)
        numeric = project_numeric(lambda x: theta_pointwise(*pair_a, t, x), 1, 6, 40)
        for alpha in enumerate_multi_indices(1, 6):
            assert numeric.coeff(alpha) == pytest.approx(closed.coeff(alpha), abs=1e-8)

    def test_invalid_arguments_are_rejected(self, pair_a):
        """Test t <= 0 and K < 1."""
        with pytest.raises(InvalidInputError):
            chaos_coefficients(*pair_a, 0.0, 4)
        with pytest.raises(InvalidInputError):
            chaos_coefficients(*pair_a, 1.0, 0)

    def test_leading_slice_constant(self, pair_b):
        """Test sum of squared degree-3 gaps over 3! = 16/6."""
        assert leading_slice_constant(*pair_b, 2) == pytest.approx(8 / 3)

    @pytest.mark.parametrize(
        ("pair", "t"), [("pair_a", 100.0), ("pair_b", 10.0), ("pair_2d", 4.0)]
    )
    def test_theta_has_zero_gaussian_mean(self, request, pair, t):
        """Test int Theta_t dg = 0 by Gauss-Hermite quadrature of Theta_t itself."""
        mu, nu = request.getfixturevalue(pair)
        projected = project_numeric(
            lambda x: theta_pointwise(mu, nu, t, x), mu.dim, 1, 40
        )
        assert abs(projected.coeff(MultiIndex.zero(mu.dim))) <= 1e-10

    @pytest.mark.parametrize(
        ("pair", "n", "t"), [("pair_b", 2, 50.0), ("pair_2d", 1, 20.0)]
    )
    def test_slices_add_up_and_lead_with_the_moment_gap(self, request, pair, n, t):
        """Test additivity over degree slices and t^n |slice n+1|^2 = sum dM^2 / alpha!."""
        mu, nu = request.getfixturevalue(pair)
        theta = chaos_coefficients(mu, nu, t, 9)
        slices = [degree_slice(theta, m) for m in range(1, 10)]
        assert math.fsum(theta_l2(s) for s in slices) == pytest.approx(
            theta_l2(theta), rel=1e-12
        )
        assert math.fsum(dirichlet_energy(s) for s in slices) == pytest.approx(
            dirichlet_energy(theta), rel=1e-12
        )
        leading = t**n * theta_l2(slices[n])
        assert leading == pytest.approx(leading_slice_constant(mu, nu, n), rel=1e-12)


class TestProjectNumeric:
    """Test numeric Hermite projection."""

    def test_basis_function_projects_onto_itself(self):
        """Test that H_2 has coefficient 1 at degree 2 and nothing else."""
        expansion = project_numeric(lambda x: x[:, 0] ** 2 - 1, 1, 3, 4)
        assert expansion.coeff(MultiIndex.of(2)) == pytest.approx(1.0, abs=1e-10)
        for k in (0, 1, 3):
            assert abs(expansion.coeff(MultiIndex.of(k))) <= 1e-10

    def test_constant_function(self):
        """Test f = 1 projects onto the zero index."""
        expansion = project_numeric(lambda x: np.ones(x.shape[0]), 1, 3, 4)
        assert expansion.coeff(MultiIndex.of(0)) == pytest.approx(1.0)
        assert abs(expansion.coeff(MultiIndex.of(2))) <= 1e-12


class TestOrnsteinUhlenbeck:
    """Test the spectral action of L and its inverse."""

    def test_inverse_divides_by_degree(self):
        """Test w_2 = -0.05 / 2."""
        w = ou_inverse(_expansion({(2,): 0.05}))
        assert w.coeff(MultiIndex.of(2)) == pytest.approx(-0.025)

    def test_inverse_of_mixed_degrees(self):
        """Test {1: 1, 3: 3} maps to {1: -1, 3: -1}."""
        w = ou_inverse(_expansion({(1,): 1.0, (3,): 3.0}))
        assert w.coeff(MultiIndex.of(1)) == pytest.approx(-1.0)
        assert w.coeff(MultiIndex.of(3)) == pytest.approx(-1.0)

    def test_zero_maps_to_zero(self):
        """Test L^-1 0 = 0."""
        assert dict(ou_inverse(_expansion({})).items()) == {}

    def test_apply_undoes_inverse(self, pair_b):
        """Test L L^-1 theta = theta on the truncated chaos."""
        theta = chaos_coefficients(*pair_b, 50.0, 7)
        roundtrip = ou_apply(ou_inverse(theta))
        for alpha, c in theta.items():
            assert roundtrip.coeff(alpha) == pytest.approx(c, rel=1e-14)

    def test_nonzero_mean_is_rejected(self):
        """Test that a constant term blocks inversion."""
        with pytest.raises(InvalidInputError):
            ou_inverse(_expansion({(0,): 1.0, (2,): 1.0}))


class TestEnergies:
    """Test Dirichlet energy and L2 norm of expansions."""

    def test_pair_a_energy_at_t_100(self, pair_a):
        """Test 0.0025 + 1.04e-8 + 2.3e-14 from degrees 2, 4 and 6."""
        energy = dirichlet_energy(chaos_coefficients(*pair_a, 100.0, 6))
        assert energy == pytest.approx(0.0025 + 24 * (1 / 24000) ** 2 / 4, rel=1e-9)
        assert 0.00250001 < energy < 0.0025000105

    def test_pair_a_l2_norm_at_t_100(self, pair_a):
        """Test int Theta^2 dg close to 0.005."""
        assert theta_l2(chaos_coefficients(*pair_a, 100.0, 6)) == pytest.approx(
            0.005, rel=1e-5
        )

    def test_single_terms(self):
        """Test energy {2: 1} = 1 and norm {1: 2} = 4."""
        assert dirichlet_energy(_expansion({(2,): 1.0})) == pytest.approx(1.0)
        assert theta_l2(_expansion({(1,): 2.0})) == pytest.approx(4.0)

    def test_zero_expansion(self):
        """Test zero energy and norm."""
        assert dirichlet_energy(_expansion({})) == 0.0
        assert theta_l2(_expansion({})) == 0.0


class TestExpansionCalculus:
    """Test evaluation, gradients, slices and the tail bound."""

    def test_evaluate_matches_theta(self, pair_a):
        """Test that a long truncation reproduces Theta_t pointwise."""
        t = 100.0
        theta = chaos_coefficients(*pair_a, t, 10)
        x = np.linspace(-3, 3, 7)
        np.testing.assert_allclose(
            chaos_evaluate(theta, x), theta_pointwise(*pair_a, t, x), atol=1e-12
        )

    def test_gradient_lowers_indices(self):
        """Test d/dx (3 H_2) = 6 H_1."""
        (derivative,) = chaos_gradient(_expansion({(2,): 3.0}))
        assert derivative.coeff(MultiIndex.of(1)) == pytest.approx(6.0)

    def test_gradient_in_the_plane(self):
        """Test partial derivatives of H_(1,1)."""
        dx, dy = chaos_gradient(_expansion({(1, 1): 1.0}))
        assert dx.coeff(MultiIndex.of(0, 1)) == 1.0
        assert dy.coeff(MultiIndex.of(1, 0)) == 1.0

    def test_degree_slice(self, pair_a):
        """Test that the degree-2 slice keeps only c_2."""
        theta = chaos_coefficients(*pair_a, 100.0, 6)
        sliced = degree_slice(theta, 2)
        assert [alpha.degree for alpha, _ in sliced.items()] == [2]

    def test_tail_bound_shrinks_with_degree(self, pair_b):
        """Test that raising the truncation lowers the tail bound."""
        low = chaos_tail_bound(*pair_b, 100.0, 4)
        high = chaos_tail_bound(*pair_b, 100.0, 8)
        assert 0 < high < low

    def test_tail_bound_dominates_omitted_energy(self, pair_a):
        """Test that energy beyond degree 4 stays under the bound."""
        full = dirichlet_energy(chaos_coefficients(*pair_a, 10.0, 30))
        truncated = dirichlet_energy(chaos_coefficients(*pair_a, 10.0, 4))
        assert full - truncated <= chaos_tail_bound(*pair_a, 10.0, 4)

    def test_tail_bound_of_measures_at_origin(self):
        """Test zero bound when every atom sits at the origin."""
        origin = DiscreteMeasure.dirac(0.0)
        assert chaos_tail_bound(origin, origin, 10.0, 4) == 0.0

    @pytest.mark.parametrize(("radius", "t"), [(10.0, 1.0), (1.0, 10.0), (3.0, 0.5)])
    def test_tail_bound_covers_the_whole_series(self, radius, t):
        """Test the bound against the degree-by-degree series summed to its peak and beyond."""
        mu = DiscreteMeasure([-radius, radius], [0.5, 0.5])
        nu = DiscreteMeasure.dirac(0.0)
        series = math.fsum(
            math.exp(
                math.log(4.0)
                + (1 - m) * math.log(t)
                + 2 * m * math.log(radius)
                - math.lgamma(m + 1)
                - math.log(m)
            )
            for m in range(5, 1000)
        )
        bound = chaos_tail_bound(mu, nu, t, 4)
        assert math.isfinite(bound)
        assert bound >= series
