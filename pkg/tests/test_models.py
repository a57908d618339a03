import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.stats import genpareto, norm, poisson

from freeknot import (
    GpdConfig,
    GpdSeasonalModel,
    IntervalPartition,
    KnotState,
    changepoint_design,
    changepoint_loglik,
    gpd_loglik,
    gpd_seasonal_loglik,
    periodic_linear_design,
    poisson_loglik,
    return_level,
    tombs_coefficients,
)
from conftest import make_state


class TestPoissonLoglik:
    def test_zero_count_zero_predictor(self):
        assert poisson_loglik(0, 0.0) == pytest.approx(-1.0, abs=1e-14)

    def test_direct_value(self):
        assert poisson_loglik(2, math.log(2)) == pytest.approx(math.log(2) - 2, abs=1e-12)

    def test_matches_reference_pmf(self, rng):
        y = rng.poisson(5.0, size=200)
        f = rng.normal(1.0, 0.5, size=200)
        ours = poisson_loglik(y, f)
        reference = poisson.logpmf(y, np.exp(f))
        np.testing.assert_allclose(ours, reference, atol=1e-10)


class TestGpdLoglik:
    def test_unit_case(self):
        assert gpd_loglik(1.0, 1.0, 1.0) == pytest.approx(-2 * math.log(2), abs=1e-12)

    def test_nonpositive_scale(self):
        assert gpd_loglik(1.0, 0.0, 0.5) == -math.inf
        assert gpd_loglik(1.0, -2.0, 0.5) == -math.inf

    def test_support_violation(self):
        # 1 + xi*y/sigma <= 0 for xi = -1, y = 2, sigma = 1
        assert gpd_loglik(2.0, 1.0, -1.0) == -math.inf

    def test_matches_scipy(self, rng):
        y = rng.uniform(0.1, 20.0, size=300)
        sigma = rng.uniform(0.5, 15.0, size=300)
        xi = rng.uniform(-0.3, 1.0, size=300)
        ok = 1.0 + xi * y / sigma > 0
        ours = gpd_loglik(y[ok], sigma[ok], xi[ok])
        reference = genpareto.logpdf(y[ok], c=xi[ok], scale=sigma[ok])
        np.testing.assert_allclose(ours, reference, atol=1e-9)

    def test_limit_branch_accuracy(self):
        """The exponential-limit branch stays within 1e-4 of the exact density."""
        import mpmath

        def exact(y, s, x):
            y, s, x = map(mpmath.mpf, (y, s, x))
            return float(-mpmath.log(s) - (1 + 1 / x) * mpmath.log(1 + x * y / s))

        for s in (0.5, 2.0, 10.0, 50.0):
            for y in (0.1, 1.0, 5.0, 30.0):
                for x in (1e-8, -1e-8, 5e-7, -5e-7):
                    assert gpd_loglik(y, s, x) == pytest.approx(exact(y, s, x), abs=1e-4)

    def test_continuity_across_switchover(self):
        for s in (0.5, 2.0, 10.0, 50.0):
            for y in (0.1, 1.0, 5.0, 30.0):
                below = gpd_loglik(y, s, 1e-6 * (1 - 1e-9))
                above = gpd_loglik(y, s, 1e-6 * (1 + 1e-9))
                assert below == pytest.approx(above, abs=1e-8)

    def test_paper_style_grid_check(self):
        """|xi|=1e-8 versus 1e-3: branch values track the exact function."""
        import mpmath

        def exact(y, s, x):
            y, s, x = map(mpmath.mpf, (y, s, x))
            return float(-mpmath.log(s) - (1 + 1 / x) * mpmath.log(1 + x * y / s))

        small, large = gpd_loglik(5.0, 10.0, 1e-8), gpd_loglik(5.0, 10.0, 1e-3)
        assert abs(small - exact(5.0, 10.0, 1e-8)) < 1e-10
        assert abs(large - exact(5.0, 10.0, 1e-3)) < 1e-12
        # the spread between the two is the true variation, not a branch jump
        assert abs(small - large) == pytest.approx(
            abs(exact(5.0, 10.0, 1e-8) - exact(5.0, 10.0, 1e-3)), abs=1e-10)

    def test_density_integrates_to_one(self):
        for sigma, xi in ((1.0, 0.3), (4.0, -0.2), (10.0, 1e-8)):
            upper = np.inf if xi >= 0 else -sigma / xi * (1 - 1e-12)
            total, _ = quad(lambda y: math.exp(gpd_loglik(y, sigma, xi)), 1e-12, upper)
            assert total == pytest.approx(1.0, abs=1e-6)


class TestGpdSeasonal:
    def partition(self):
        return IntervalPartition.from_bounds(np.linspace(1, 366, 11))

    def test_no_knots_constant_parameters(self):
        state = make_state(self.partition())
        days = np.array([1.0, 100.0, 366.0])
        y = np.array([2.0, 3.0, 4.0])
        ll = gpd_seasonal_loglik(days, y, [10.0], [0.2], state)
        direct = gpd_loglik(y, 10.0, 0.2)
        np.testing.assert_allclose(ll, direct, atol=1e-12)

    def test_curve_continuity_at_year_ends(self):
        state = make_state(self.partition(), active=[1, 5, 8])
        design0 = periodic_linear_design(np.array([0.0]), state)
        design1 = periodic_linear_design(np.array([366.0]), state)
        beta = np.array([12.0, 0.5, -1.2])
        assert design0.values @ beta == pytest.approx(design1.values @ beta, abs=1e-10)

    def test_hand_built_two_season_total(self, rng):
        state = make_state(self.partition(), active=[2, 7], gammas=None)
        days = rng.uniform(1, 366, size=40)
        y = rng.uniform(0.5, 8.0, size=40)
        beta_s = np.array([9.0, 0.04])
        beta_x = np.array([0.15, 0.001])
        design = periodic_linear_design(days, state)
        sigma_t = design.values @ beta_s
        xi_t = design.values @ beta_x
        direct = sum(gpd_loglik(yi, si, xi) for yi, si, xi in zip(y, sigma_t, xi_t))
        total = np.sum(gpd_seasonal_loglik(days, y, beta_s, beta_x, state))
        assert total == pytest.approx(direct, abs=1e-10)

    def test_gradient_and_hessian_match_finite_differences(self, rng):
        state = make_state(self.partition(), active=[1, 4, 8])
        days = rng.uniform(1, 366, size=60)
        model = GpdSeasonalModel(days, rng.uniform(0.5, 10.0, size=60))
        design = model.design(state)
        beta = model.start_beta(design)
        beta += 0.01 * rng.normal(size=beta.size)
        g = model.grad(design, beta)
        h = model.hessian(design, beta)
        eps = 1e-6
        for j in range(beta.size):
            e = np.zeros_like(beta)
            e[j] = eps
            fd = (model.loglik(design, beta + e) - model.loglik(design, beta - e)) / (2 * eps)
            assert g[j] == pytest.approx(fd, rel=1e-5, abs=1e-5)
            fd_row = (model.grad(design, beta + e) - model.grad(design, beta - e)) / (2 * eps)
            np.testing.assert_allclose(h[:, j], fd_row, rtol=1e-4, atol=1e-4)

    def test_hessian_limit_branch_matches_finite_differences(self, rng):
        state = make_state(self.partition(), active=[1, 4])
        days = rng.uniform(1, 366, size=50)
        model = GpdSeasonalModel(days, rng.uniform(0.5, 6.0, size=50))
        design = model.design(state)
        m = design.m // 2
        beta = np.zeros(design.m)
        beta[0] = 5.0
        beta[m] = 0.0  # shape exactly at the limit branch
        g = model.grad(design, beta)
        eps = 1e-6
        for j in range(beta.size):
            e = np.zeros_like(beta)
            e[j] = eps
            fd = (model.loglik(design, beta + e) - model.loglik(design, beta - e)) / (2 * eps)
            assert g[j] == pytest.approx(fd, rel=2e-4, abs=2e-4)


class TestReturnLevel:
    CFG = GpdConfig(threshold=10.0, zeta_u=0.05)

    def oracle(self, sigma, xi, years=50.0):
        target = 1.0 / (years * self.CFG.n_y)

        def h(z):
            return self.CFG.zeta_u * (1 + xi * z / sigma) ** (-1.0 / xi) - target

        return brentq(h, 1e-9, 1e7)

    def test_positive_shape_value(self):
        got = return_level(10.0, 0.2, self.CFG, years=50.0)
        assert got == pytest.approx(self.oracle(10.0, 0.2), rel=1e-9)
        assert got == pytest.approx(145.5, abs=0.1)

    def test_zero_shape_limit(self):
        got = return_level(10.0, 0.0, self.CFG, years=50.0)
        assert got == pytest.approx(10.0 * math.log(50 * 365.25 * 0.05), abs=1e-9)
        assert got == pytest.approx(68.17, abs=0.01)

    def test_round_trip_identity(self):
        z = return_level(10.0, 0.2, self.CFG, years=50.0)
        back = self.CFG.zeta_u * (1 + 0.2 * z / 10.0) ** (-1 / 0.2)
        assert back == pytest.approx(1.0 / (50 * 365.25), abs=1e-10)

    def test_below_threshold_error(self):
        cfg = GpdConfig(threshold=0.0, zeta_u=1e-6)
        with pytest.raises(ValueError, match="below threshold"):
            return_level(10.0, 0.2, cfg, years=1.0)

    @settings(max_examples=40, deadline=None)
    @given(sigma=st.floats(0.5, 50.0), xi=st.floats(-0.9, 2.0),
           years=st.floats(1.0, 200.0))
    def test_increasing_in_horizon(self, sigma, xi, years):
        cfg = GpdConfig(threshold=0.0, zeta_u=0.05)
        if years * cfg.n_y * cfg.zeta_u <= 1.001:
            return
        a = return_level(sigma, xi, cfg, years=years)
        b = return_level(sigma, xi, cfg, years=years * 1.5)
        assert b > a


class TestChangepointLoglik:
    def make_design(self, rng, n=15):
        part = IntervalPartition.from_bounds([0.15, 0.8, 1.2, 1.6])
        state = make_state(part, active=[2], gammas=[0.5, 1.0, 1.29])
        x = np.sort(rng.uniform(0.2, 1.6, size=n))
        return changepoint_design(x, state), x

    def test_zero_residuals(self, rng):
        design, _ = self.make_design(rng)
        beta = rng.normal(size=design.m)
        fitted = design.values @ beta
        got = changepoint_loglik(fitted, design, beta, sigma2=0.25)
        assert got == pytest.approx(-0.5 * design.n * math.log(2 * math.pi * 0.25), abs=1e-10)

    def test_variance_doubling_identity(self, rng):
        design, _ = self.make_design(rng)
        beta = rng.normal(size=design.m)
        log_r = design.values @ beta + rng.normal(0, 0.2, size=design.n)
        rss = float(np.sum((log_r - design.values @ beta) ** 2))
        s2 = 0.1
        lhs = changepoint_loglik(log_r, design, beta, 2 * s2)
        rhs = changepoint_loglik(log_r, design, beta, s2)
        expected_delta = -0.5 * design.n * math.log(2.0) + 0.5 * rss * (1 / s2 - 1 / (2 * s2))
        assert lhs - rhs == pytest.approx(expected_delta, abs=1e-10)

    def test_matches_direct_normal_sum(self, rng):
        design, _ = self.make_design(rng)
        beta = rng.normal(size=design.m)
        log_r = design.values @ beta + rng.normal(0, 0.3, size=design.n)
        direct = float(np.sum(norm.logpdf(log_r, loc=design.values @ beta, scale=math.sqrt(0.09))))
        assert changepoint_loglik(log_r, design, beta, 0.09) == pytest.approx(direct, abs=1e-12)


class TestTombsCoefficients:
    def test_no_changepoints(self):
        segments = tombs_coefficients(-0.15, 0.96, [], [])
        assert segments == [(-0.15, 0.96)]

    def test_single_changepoint_recursion(self):
        segments = tombs_coefficients(-0.15, 0.96, [-0.52], [1.29])
        assert segments[0] == (-0.15, 0.96)
        assert segments[1][0] == pytest.approx(-0.15 + 0.52, abs=1e-12)
        assert segments[1][1] == pytest.approx(0.96 - 0.52 / 1.29, abs=1e-12)

    def test_segment_curve_reproduces_spline(self, rng):
        gammas = np.array([0.6, 1.0, 1.4])
        eta = rng.normal(size=3)
        alpha0, alpha1 = rng.normal(size=2)
        segments = tombs_coefficients(alpha0, alpha1, eta, gammas)
        x = np.linspace(0.1, 1.8, 100)
        spline = alpha0 + alpha1 * x + np.maximum(-1 + x[:, None] / gammas[None, :], 0.0) @ eta
        seg_idx = np.searchsorted(gammas, x, side="right")
        piecewise = np.array([segments[j][0] + segments[j][1] * xi for j, xi in zip(seg_idx, x)])
        np.testing.assert_allclose(piecewise, spline, atol=1e-10)

    def test_rejects_unsorted_gammas(self):
        with pytest.raises(ValueError):
            tombs_coefficients(0.0, 1.0, [1.0, 2.0], [1.4, 0.6])
