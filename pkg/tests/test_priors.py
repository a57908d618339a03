import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freeknot import (
    DesignMatrix,
    IntervalPartition,
    PriorConfig,
    default_c,
    log_gamma_prior,
    log_gprior,
    log_trunc_poisson,
)
from conftest import make_state


class TestTruncPoisson:
    def test_empty_model_weight_is_one(self):
        cfg = PriorConfig(c=100.0, lam=7.3)
        assert log_trunc_poisson(0, cfg) == 0.0

    def test_truncation(self):
        cfg = PriorConfig(c=100.0, lam=3.0, max_knots=10)
        assert log_trunc_poisson(11, cfg) == -math.inf
        assert math.isfinite(log_trunc_poisson(10, cfg))

    def test_direct_value(self):
        cfg = PriorConfig(c=100.0, lam=3.0)
        assert log_trunc_poisson(2, cfg) == pytest.approx(math.log(4.5), abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(size=st.integers(0, 20), lam=st.floats(0.1, 10.0), cap=st.integers(1, 15))
    def test_finite_iff_within_cap(self, size, lam, cap):
        cfg = PriorConfig(c=1.0, lam=lam, max_knots=cap)
        assert math.isfinite(log_trunc_poisson(size, cfg)) == (size <= cap)


class TestGammaPrior:
    def test_uniform_product(self):
        part = IntervalPartition.from_bounds(np.linspace(0, 1, 11))
        state = make_state(part)
        assert log_gamma_prior(state) == pytest.approx(10 * math.log(10), abs=1e-10)

    def test_single_unit_interval(self):
        part = IntervalPartition.from_bounds([0.0, 1.0])
        state = make_state(part)
        assert log_gamma_prior(state) == pytest.approx(0.0, abs=1e-14)

    def test_outside_support(self):
        part = IntervalPartition.from_bounds([0.0, 0.5, 1.0])
        state = make_state(part)
        state.gamma[0] = 0.7  # bypass the constructor guard
        assert log_gamma_prior(state) == -math.inf


class TestGPrior:
    def make_design(self, rng, n=12, m=3):
        x = rng.normal(size=(n, m))
        return DesignMatrix(x, [("c", i) for i in range(m)])

    def test_mode_value(self, rng):
        design = self.make_design(rng)
        cfg = PriorConfig(c=37.0)
        sigma2 = 2.5
        r_diag = np.abs(np.diag(design.r_matrix()))
        expected = (-0.5 * design.m * math.log(2 * math.pi * sigma2 * cfg.c)
                    + np.sum(np.log(r_diag)))
        got = log_gprior(np.zeros(design.m), sigma2, design, cfg)
        assert got == pytest.approx(expected, abs=1e-10)

    def test_orthonormal_unit_scale_reduces_to_standard_normal(self):
        design = DesignMatrix(np.eye(8)[:, :1], [("c", 0)])
        cfg = PriorConfig(c=1.0)
        got = log_gprior(np.array([1.0]), 1.0, design, cfg)
        assert got == pytest.approx(-0.5 * math.log(2 * math.pi) - 0.5, abs=1e-12)

    def test_symmetry_in_beta(self, rng):
        design = self.make_design(rng)
        cfg = PriorConfig(c=5.0)
        beta = rng.normal(size=design.m)
        assert log_gprior(beta, 1.3, design, cfg) == pytest.approx(
            log_gprior(-beta, 1.3, design, cfg), abs=1e-12)

    def test_density_integrates_to_one(self, rng):
        """Importance-sample the normalizing integral on an m=2 instance."""
        design = self.make_design(rng, n=10, m=2)
        cfg = PriorConfig(c=3.0)
        sigma2 = 0.8
        cov = sigma2 * cfg.c * np.linalg.inv(design.values.T @ design.values)
        draw_cov = 4.0 * cov  # wider proposal keeps the weights bounded
        n_mc = 200_000
        props = rng.multivariate_normal(np.zeros(2), draw_cov, size=n_mc)
        inv = np.linalg.inv(draw_cov)
        logq = (-math.log(2 * math.pi) - 0.5 * math.log(np.linalg.det(draw_cov))
                - 0.5 * np.einsum("ij,jk,ik->i", props, inv, props))
        # vectorized target evaluation via the quadratic form
        gram = design.values.T @ design.values
        quad = np.einsum("ij,jk,ik->i", props, gram, props)
        logp = (-math.log(2 * math.pi * sigma2 * cfg.c)
                + 0.5 * np.linalg.slogdet(gram)[1] - 0.5 * quad / (sigma2 * cfg.c))
        w = np.exp(logp - logq)
        est = w.mean()
        se = w.std(ddof=1) / math.sqrt(n_mc)
        assert abs(est - 1.0) < 3 * se
        # spot-check the vectorized target against the library function
        for b in props[:5]:
            assert log_gprior(b, sigma2, design, cfg) == pytest.approx(
                -math.log(2 * math.pi * sigma2 * cfg.c)
                + 0.5 * np.linalg.slogdet(gram)[1]
                - 0.5 * float(b @ gram @ b) / (sigma2 * cfg.c), abs=1e-9)

    def test_rank_deficient_design_rejected(self):
        values = np.column_stack([np.ones(6), np.ones(6)])
        design = DesignMatrix(values, [("c", 0), ("c", 1)])
        from freeknot import RankDeficiencyError
        with pytest.raises(RankDeficiencyError):
            log_gprior(np.zeros(2), 1.0, design, PriorConfig(c=2.0))


def test_default_c_rule():
    assert default_c(100) == 100.0
    assert default_c(500) == 500.0
    assert default_c(99) == 200.0
    assert default_c(20) == 200.0
