"""Observation models pluggable into the non-Gaussian sampler.

Each model binds a dataset and a design builder and exposes the
log-likelihood with analytic gradient and Hessian in the coefficient
vector, a feasible starting point for mode finding, and (optionally) a
Gibbs refresh for a nuisance parameter.  -inf is the support-violation
channel throughout; the samplers treat it as an automatic rejection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .basis import Dataset, DesignBuilder, DesignMatrix, KnotState, periodic_linear_design
from .priors import PriorConfig

XI_SWITCH = 1e-6  # below this |xi| the exponential-limit forms take over


def poisson_loglik(y, f):
    """Poisson log-pmf with log link: y*f - exp(f) - log(y!)."""
    y = np.asarray(y, dtype=float)
    f = np.asarray(f, dtype=float)
    out = y * f - np.exp(f) - gammaln(y + 1.0)
    return float(out) if out.ndim == 0 else out


def gpd_loglik(y, sigma, xi):
    """Generalized Pareto log-density for exceedances y > 0.

    -log(sigma) - (1 + 1/xi) log(1 + xi*y/sigma) on the support
    {sigma > 0, 1 + xi*y/sigma > 0}; exponential-limit form for tiny |xi|.
    """
    y = np.asarray(y, dtype=float)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), y.shape).copy()
    xi = np.broadcast_to(np.asarray(xi, dtype=float), y.shape).copy()
    out = np.full(y.shape, -math.inf)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        valid = (sigma > 0) & (y > 0) & (1.0 + xi * y / sigma > 0)
        small = valid & (np.abs(xi) < XI_SWITCH)
        gen = valid & ~small
        out[gen] = -np.log(sigma[gen]) - (1.0 + 1.0 / xi[gen]) * np.log1p(xi[gen] * y[gen] / sigma[gen])
        out[small] = -np.log(sigma[small]) - y[small] / sigma[small]
    if out.ndim == 0:
        return float(out)
    return out


def gpd_seasonal_loglik(day, y, beta_sigma, beta_xi, state: KnotState, period: float = 366.0):
    """GPD log-density with scale and shape given by periodic first-order curves."""
    design = periodic_linear_design(day, state, period=period)
    sigma_t = design.values @ np.asarray(beta_sigma, dtype=float)
    xi_t = design.values @ np.asarray(beta_xi, dtype=float)
    return gpd_loglik(y, sigma_t, xi_t)


@dataclass(frozen=True)
class GpdConfig:
    """Threshold metadata for exceedance modelling and return levels."""

    threshold: float
    zeta_u: float  # P(observation exceeds the threshold)
    n_y: float = 365.25  # observations per year
    period: float = 366.0

    def __post_init__(self):
        if not 0.0 < self.zeta_u < 1.0:
            raise ValueError("zeta_u must be in (0, 1)")
        if not math.isfinite(self.threshold):
            raise ValueError("threshold must be finite")


def return_level(sigma, xi, config: GpdConfig, years: float = 50.0):
    """Exceedance level surpassed on average once per `years` years.

    Solves zeta_u (1 + xi z / sigma)^(-1/xi) = 1/(years * n_y); the value is
    the exceedance above the threshold (add the threshold for the absolute
    level).  Uses the sigma*log(...) limit for tiny |xi|.
    """
    horizon = years * config.n_y * config.zeta_u
    if horizon <= 1.0:
        raise ValueError("return level below threshold")
    sigma = np.asarray(sigma, dtype=float)
    xi = np.broadcast_to(np.asarray(xi, dtype=float), sigma.shape).copy()
    small = np.abs(xi) < XI_SWITCH
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = np.where(small,
                       sigma * math.log(horizon),
                       sigma / np.where(small, 1.0, xi) * (horizon ** xi - 1.0))
    if out.ndim == 0:
        return float(out)
    return out


def changepoint_loglik(log_r, design: DesignMatrix, beta, sigma2: float) -> float:
    """Gaussian log-density of the log-radius residuals (joint-density validation only).

    The change-point model itself runs through the conjugate engine with
    sigma^2 integrated out; this evaluates the un-marginalized joint.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    resid = np.asarray(log_r, dtype=float) - design.values @ np.asarray(beta, dtype=float)
    n = resid.size
    return float(-0.5 * n * math.log(2.0 * math.pi * sigma2) - 0.5 * np.sum(resid ** 2) / sigma2)


def tombs_coefficients(alpha0: float, alpha1: float, eta, gamma_active):
    """Per-segment (log a_j, b_j) from the spline parameterization.

    Segment j (between change points j-1 and j) has intercept
    alpha0 - sum_{k<j} eta_k and slope alpha1 + sum_{k<j} eta_k / gamma_k.
    """
    eta = np.asarray(eta, dtype=float)
    gamma_active = np.asarray(gamma_active, dtype=float)
    if eta.size != gamma_active.size:
        raise ValueError("eta and gamma_active must have equal length")
    if eta.size and (np.any(gamma_active <= 0) or np.any(np.diff(gamma_active) <= 0)):
        raise ValueError("gamma_active must be positive and strictly increasing")
    segments = [(alpha0, alpha1)]
    for j in range(1, eta.size + 1):
        segments.append((alpha0 - float(eta[:j].sum()),
                         alpha1 + float(np.sum(eta[:j] / gamma_active[:j]))))
    return segments


class PoissonLogLinkModel:
    """Counts with log-link spline rate: y_i ~ Poisson(exp(f(x_i)))."""

    name = "poisson"
    mode_kind = "mle"
    prior_variance_factor = 1.0

    def __init__(self, data: Dataset, builder: DesignBuilder):
        self.data = data
        self.builder = builder
        self._logfact = float(gammaln(data.y + 1.0).sum())

    def design(self, state: KnotState) -> DesignMatrix:
        return self.builder.build(self.data.x, state)

    def grid_design(self, grid, state: KnotState) -> DesignMatrix:
        return self.builder.build(grid, state)

    def loglik(self, design: DesignMatrix, beta) -> float:
        eta = design.values @ beta
        if eta.max() > 700.0:  # exp overflow guard; reject absurd rates
            return -math.inf
        return float(self.data.y @ eta - np.exp(eta).sum()) - self._logfact

    def grad(self, design: DesignMatrix, beta) -> np.ndarray:
        eta = design.values @ beta
        return design.values.T @ (self.data.y - np.exp(eta))

    def hessian(self, design: DesignMatrix, beta) -> np.ndarray:
        w = np.exp(design.values @ beta)
        return -(design.values.T * w) @ design.values

    def start_beta(self, design: DesignMatrix) -> np.ndarray:
        return np.zeros(design.m)

    def log_nuisance_prior(self) -> float:
        return 0.0

    def refresh_nuisance(self, design, beta, priors, rng) -> bool:
        return False


class GaussianVarianceModel:
    """Gaussian errors with the variance kept as an explicit nuisance parameter.

    Used to drive Gaussian data through the non-conjugate sampler (e.g. for
    cross-checking against the marginalized engine).  sigma^2 gets an exact
    Gibbs refresh from its inverse-gamma full conditional under the 1/sigma^2
    prior, so the chain targets the same joint as the conjugate path.
    """

    name = "gaussian"
    mode_kind = "mle"

    def __init__(self, data: Dataset, builder: DesignBuilder, sigma2: float = 1.0):
        self.data = data
        self.builder = builder
        self.sigma2 = float(sigma2)

    @property
    def prior_variance_factor(self) -> float:
        return self.sigma2

    def design(self, state: KnotState) -> DesignMatrix:
        return self.builder.build(self.data.x, state)

    def grid_design(self, grid, state: KnotState) -> DesignMatrix:
        return self.builder.build(grid, state)

    def loglik(self, design: DesignMatrix, beta) -> float:
        resid = self.data.y - design.values @ beta
        n = self.data.n
        return float(-0.5 * n * math.log(2.0 * math.pi * self.sigma2)
                     - 0.5 * np.sum(resid ** 2) / self.sigma2)

    def grad(self, design: DesignMatrix, beta) -> np.ndarray:
        return design.values.T @ (self.data.y - design.values @ beta) / self.sigma2

    def hessian(self, design: DesignMatrix, beta) -> np.ndarray:
        return -design.values.T @ design.values / self.sigma2

    def start_beta(self, design: DesignMatrix) -> np.ndarray:
        return np.zeros(design.m)

    def log_nuisance_prior(self) -> float:
        return -math.log(self.sigma2)

    def initialize(self, design: DesignMatrix, beta, rng):
        resid = self.data.y - design.values @ beta
        self.sigma2 = max(float(np.mean(resid ** 2)), 1e-8)

    def refresh_nuisance(self, design: DesignMatrix, beta, priors: PriorConfig, rng) -> bool:
        xb = design.values @ beta
        resid = self.data.y - xb
        quad = float(np.sum(resid ** 2)) + float(np.sum(xb ** 2)) / priors.c
        shape = 0.5 * (self.data.n + design.m)
        rate = 0.5 * quad
        self.sigma2 = rate / rng.gamma(shape)
        return True


def _gpd_pointwise_derivs(y, s, x):
    """First and second derivatives of the GPD log-density in (sigma, xi).

    General-xi expressions with series limits below the switchover; assumes
    the support constraints already hold.
    """
    small = np.abs(x) < XI_SWITCH
    xs = np.where(small, 1.0, x)  # placeholder to keep vector ops finite
    u = 1.0 + xs * y / s
    logu = np.log(u)
    ds = np.where(small, -1.0 / s + y / s ** 2,
                  -1.0 / s + (1.0 + xs) * y / (s ** 2 * u))
    dx = np.where(small, y ** 2 / (2.0 * s ** 2) - y / s,
                  logu / xs ** 2 - (1.0 + 1.0 / xs) * y / (s * u))
    dss = np.where(small, 1.0 / s ** 2 - 2.0 * y / s ** 3,
                   1.0 / s ** 2 - 2.0 * (1.0 + xs) * y / (s ** 3 * u)
                   + (1.0 + xs) * xs * y ** 2 / (s ** 4 * u ** 2))
    dsx = np.where(small, y / s ** 2 - y ** 2 / s ** 3,
                   y / (s ** 2 * u) - (1.0 + xs) * y ** 2 / (s ** 3 * u ** 2))
    dxx = np.where(small, y ** 2 / s ** 2 - 2.0 * y ** 3 / (3.0 * s ** 3),
                   -2.0 * logu / xs ** 3 + 2.0 * y / (xs ** 2 * s * u)
                   + (1.0 + 1.0 / xs) * y ** 2 / (s ** 2 * u ** 2))
    return ds, dx, dss, dsx, dxx


class GpdSeasonalModel:
    """Threshold exceedances with periodic seasonal GPD scale and shape curves.

    Both curves share the knot state; the coefficient vector concatenates the
    scale block and the shape block, and the design is block-diagonal over
    the two curves.  The scale curve uses an identity link with nonpositive
    values rejected through the -inf channel.
    """

    name = "gpd"
    mode_kind = "map"
    prior_variance_factor = 1.0

    def __init__(self, days, y, period: float = 366.0, start_xi: float = 0.1):
        self.days = np.asarray(days, dtype=float)
        self.y = np.asarray(y, dtype=float)
        if np.any(self.y <= 0):
            raise ValueError("exceedances must be positive")
        self.period = float(period)
        self.start_xi = float(start_xi)
        self.builder = DesignBuilder("periodic", degree=1, period=self.period)

    def curve_design(self, points, state: KnotState) -> DesignMatrix:
        return periodic_linear_design(points, state, period=self.period)

    def design(self, state: KnotState) -> DesignMatrix:
        base = self.curve_design(self.days, state)
        n, m = base.values.shape
        values = np.zeros((2 * n, 2 * m))
        values[:n, :m] = base.values
        values[n:, m:] = base.values
        labels = [("sigma",) + lab for lab in base.column_labels]
        labels += [("xi",) + lab for lab in base.column_labels]
        return DesignMatrix(values, labels, basis_used="periodic")

    def _curves(self, design: DesignMatrix, beta):
        m = design.m // 2
        n = design.n // 2
        base = design.values[:n, :m]
        return base, base @ beta[:m], base @ beta[m:]

    def loglik(self, design: DesignMatrix, beta) -> float:
        _, sigma_t, xi_t = self._curves(design, beta)
        if np.any(sigma_t <= 0):
            return -math.inf
        ll = gpd_loglik(self.y, sigma_t, xi_t)
        total = float(np.sum(ll))
        return total if math.isfinite(total) else -math.inf

    def grad(self, design: DesignMatrix, beta) -> np.ndarray:
        base, sigma_t, xi_t = self._curves(design, beta)
        ds, dx, *_ = _gpd_pointwise_derivs(self.y, sigma_t, xi_t)
        return np.concatenate([base.T @ ds, base.T @ dx])

    def hessian(self, design: DesignMatrix, beta) -> np.ndarray:
        base, sigma_t, xi_t = self._curves(design, beta)
        _, _, dss, dsx, dxx = _gpd_pointwise_derivs(self.y, sigma_t, xi_t)
        h_ss = (base.T * dss) @ base
        h_sx = (base.T * dsx) @ base
        h_xx = (base.T * dxx) @ base
        m = base.shape[1]
        out = np.empty((2 * m, 2 * m))
        out[:m, :m] = h_ss
        out[:m, m:] = h_sx
        out[m:, :m] = h_sx.T
        out[m:, m:] = h_xx
        return out

    def start_beta(self, design: DesignMatrix) -> np.ndarray:
        m = design.m // 2
        beta = np.zeros(design.m)
        beta[0] = float(np.mean(self.y))  # scale intercept at the moment estimate
        beta[m] = self.start_xi
        return beta

    def log_nuisance_prior(self) -> float:
        return 0.0

    def refresh_nuisance(self, design, beta, priors, rng) -> bool:
        return False
