import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freeknot import (
    Dataset,
    DesignBuilder,
    IntervalPartition,
    KnotState,
    RankDeficiencyError,
    bspline_design,
    changepoint_design,
    default_intervals,
    periodic_full_coefficients,
    periodic_linear_design,
    truncated_power_design,
)
from conftest import make_state


def unit_partition(k_max):
    return IntervalPartition.from_bounds(np.linspace(0.0, 1.0, k_max + 1))


class TestTruncatedPower:
    def test_plus_power_entry(self):
        part = unit_partition(1)
        state = make_state(part, active=[0], gammas=[0.5])
        design = truncated_power_design(np.array([0.8]), 3, state)
        assert design.values[0, -1] == pytest.approx(0.027, abs=1e-15)

    def test_truncates_below_knot(self):
        part = unit_partition(1)
        state = make_state(part, active=[0], gammas=[0.5])
        design = truncated_power_design(np.array([0.4]), 3, state)
        assert design.values[0, -1] == 0.0

    def test_no_knots_gives_pure_polynomial(self):
        part = unit_partition(4)
        state = make_state(part)
        x = np.linspace(0, 1, 5)
        design = truncated_power_design(x, 3, state)
        assert design.values.shape == (5, 4)
        np.testing.assert_allclose(design.values, np.column_stack([x**j for j in range(4)]))

    def test_column_labels(self):
        part = unit_partition(3)
        state = make_state(part, active=[0, 2])
        design = truncated_power_design(np.linspace(0, 1, 8), 2, state)
        assert design.column_labels == [("poly", 0), ("poly", 1), ("poly", 2),
                                        ("knot", 0), ("knot", 2)]

    @settings(max_examples=40, deadline=None)
    @given(gamma=st.floats(0.05, 0.95), degree=st.integers(1, 4))
    def test_knot_column_zero_at_and_below_knot(self, gamma, degree):
        part = unit_partition(1)
        state = make_state(part, active=[0], gammas=[gamma])
        x = np.linspace(0, 1, 40)
        design = truncated_power_design(x, degree, state)
        assert np.all(design.values[x <= gamma, -1] == 0.0)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_dropping_column_equals_flipping_z(self, seed):
        rng = np.random.default_rng(seed)
        part = unit_partition(4)
        gammas = part.lower + rng.uniform(0.1, 0.9, size=4) * part.widths
        state = make_state(part, active=[1, 3], gammas=gammas)
        x = rng.uniform(0, 1, size=12)
        full = truncated_power_design(x, 3, state)
        reduced = truncated_power_design(x, 3, state.flipped(3))
        np.testing.assert_array_equal(full.values[:, :-1], reduced.values)

    def test_factorization_reproduces_values(self):
        rng = np.random.default_rng(1)
        part = unit_partition(3)
        state = make_state(part, active=[0, 1, 2])
        x = rng.uniform(0, 1, 25)
        design = truncated_power_design(x, 3, state)
        q, r = design.q_matrix(), design.r_matrix()
        rel = np.linalg.norm(q @ r - design.values) / np.linalg.norm(design.values)
        assert rel < 1e-10


class TestBSpline:
    def test_matches_truncated_power_fit(self):
        rng = np.random.default_rng(42)
        part = unit_partition(4)
        state = make_state(part, active=[0, 2], gammas=[0.2, 0.3, 0.6, 0.9])
        x = np.sort(rng.uniform(0, 1, 30))
        y = rng.normal(size=30)
        tp = truncated_power_design(x, 3, state)
        bs = bspline_design(x, 3, state, x_range=(0.0, 1.0))
        assert bs.m == tp.m
        fit_tp = tp.values @ tp.least_squares(y)
        fit_bs = bs.values @ bs.least_squares(y)
        np.testing.assert_allclose(fit_bs, fit_tp, atol=1e-8)

    def test_zero_knots_matches_polynomial_fit(self):
        rng = np.random.default_rng(3)
        part = unit_partition(2)
        state = make_state(part)
        x = np.sort(rng.uniform(0, 1, 20))
        y = rng.normal(size=20)
        bs = bspline_design(x, 3, state, x_range=(0.0, 1.0))
        fit_bs = bs.values @ bs.least_squares(y)
        fit_poly = np.polynomial.polynomial.polyval(
            x, np.polynomial.polynomial.polyfit(x, y, 3))
        np.testing.assert_allclose(fit_bs, fit_poly, atol=1e-8)

    def test_better_conditioned_on_clustered_knots(self):
        rng = np.random.default_rng(7)
        x = np.sort(rng.uniform(0, 1, 20))
        part = IntervalPartition.from_bounds([0.40, 0.44, 0.48, 0.52])
        state = make_state(part, active=[0, 1, 2])
        tp = truncated_power_design(x, 3, state)
        bs = bspline_design(x, 3, state, x_range=(0.0, 1.0))
        assert np.linalg.cond(bs.values) <= np.linalg.cond(tp.values)

    def test_degenerate_knots_raise(self):
        part = IntervalPartition.from_bounds([0.0, 0.5, 1.0])
        state = KnotState(np.array([1, 0], dtype=np.uint8), np.array([0.0, 0.6]), part)
        with pytest.raises(RankDeficiencyError):
            bspline_design(np.linspace(0, 1, 10), 3, state, x_range=(0.0, 1.0))


class TestChangepoint:
    def test_entry_value(self):
        part = IntervalPartition.from_bounds([1.2, 1.4])
        state = make_state(part, active=[0], gammas=[1.29])
        design = changepoint_design(np.array([1.5]), state)
        assert design.values[0, -1] == pytest.approx(-1.0 + 1.5 / 1.29, abs=1e-12)

    def test_truncation(self):
        part = IntervalPartition.from_bounds([1.2, 1.4])
        state = make_state(part, active=[0], gammas=[1.29])
        design = changepoint_design(np.array([1.0, 1.29]), state)
        np.testing.assert_array_equal(design.values[:, -1], [0.0, 0.0])

    def test_shape(self):
        part = IntervalPartition.from_bounds([0.5, 1.0, 1.5])
        state = make_state(part, active=[1])
        design = changepoint_design(np.linspace(0.1, 2.0, 15), state)
        assert design.values.shape == (15, 3)


class TestPeriodic:
    def test_value_and_slope_continuity(self):
        rng = np.random.default_rng(5)
        part = IntervalPartition.from_bounds(np.linspace(1, 366, 11))
        state = make_state(part, active=[1, 4, 8])
        free = rng.normal(size=3)  # intercept + 2 free knot coefficients
        a0, a1, eta = periodic_full_coefficients(free, state)
        g = np.sort(state.active_gammas())

        def raw_curve(t):
            return a0 + a1 * t + np.sum(eta * np.maximum(t - g, 0.0))

        assert raw_curve(0.0) == pytest.approx(raw_curve(366.0), abs=1e-10)
        h = 1e-6
        slope0 = (raw_curve(h) - raw_curve(0.0)) / h
        slope1 = (raw_curve(366.0) - raw_curve(366.0 - h)) / h
        assert slope0 == pytest.approx(slope1, abs=1e-6)

    def test_design_matches_reconstruction(self):
        rng = np.random.default_rng(8)
        part = IntervalPartition.from_bounds(np.linspace(1, 366, 11))
        state = make_state(part, active=[0, 3, 7])
        t = rng.uniform(0, 366, size=50)
        design = periodic_linear_design(t, state)
        free = rng.normal(size=design.m)
        a0, a1, eta = periodic_full_coefficients(free, state)
        g = np.sort(state.active_gammas())
        direct = a0 + a1 * t + np.maximum(t[:, None] - g[None, :], 0.0) @ eta
        np.testing.assert_allclose(design.values @ free, direct, atol=1e-10)

    def test_eta_sum_constraint(self):
        part = IntervalPartition.from_bounds(np.linspace(1, 366, 6))
        state = make_state(part, active=[0, 2, 4])
        _, _, eta = periodic_full_coefficients(np.array([0.3, 1.0, -2.0]), state)
        assert eta.sum() == pytest.approx(0.0, abs=1e-12)

    def test_fewer_than_two_knots_is_intercept_only(self):
        part = IntervalPartition.from_bounds(np.linspace(1, 366, 6))
        for active in ([], [2]):
            state = make_state(part, active=active)
            design = periodic_linear_design(np.arange(1.0, 367.0), state)
            assert design.column_labels == [("intercept",)]
            assert design.m == 1


class TestDefaultIntervals:
    def test_explicit_poisson_bounds(self):
        data = Dataset(np.linspace(0, 1, 50), np.zeros(50))
        bounds = (0.02, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.98)
        part = default_intervals(data, "explicit", bounds=bounds)
        assert part.k_max == 10
        np.testing.assert_allclose(part.lower, bounds[:-1])

    def test_every_nx_counts(self):
        data = Dataset(np.linspace(0, 1, 100), np.zeros(100))
        part = default_intervals(data, "every_nx", n_x=4)
        assert part.k_max == 25  # 24 interior boundaries

    def test_equal_count_clamping(self):
        data = Dataset(np.linspace(0, 1, 40), np.zeros(40))
        part = default_intervals(data, "equal_count", k_max=10)
        np.testing.assert_allclose(part.widths, 0.096)
        assert part.lower[0] == pytest.approx(0.02)
        assert part.upper[-1] == pytest.approx(0.98)

    def test_too_few_distinct_values(self):
        data = Dataset(np.array([0.0, 0.0, 1.0]), np.zeros(3))
        with pytest.raises(ValueError):
            default_intervals(data, "every_nx", n_x=4)


class TestBuilderFallback:
    def test_truncated_power_falls_back_to_bspline(self):
        rng = np.random.default_rng(11)
        x = np.sort(rng.uniform(0, 1, 14))
        # extremely tight intervals force near-collinear truncated-power columns
        part = IntervalPartition.from_bounds([0.5, 0.5 + 2e-9, 0.5 + 4e-9, 0.5 + 6e-9])
        state = make_state(part, active=[0, 1, 2])
        builder = DesignBuilder("truncated_power", 3, x_range=(0.0, 1.0))
        design = builder.build(x, state)
        assert design.basis_used == "bspline"

    def test_well_conditioned_stays_truncated_power(self):
        x = np.linspace(0, 1, 30)
        part = unit_partition(3)
        state = make_state(part, active=[1])
        builder = DesignBuilder("truncated_power", 3, x_range=(0.0, 1.0))
        assert builder.build(x, state).basis_used == "truncated_power"
