"""Log-densities of the prior components.

Every function returns a log value; -inf is a first-class result meaning
zero density, and any Metropolis-Hastings ratio with -inf in the numerator
is an automatic rejection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import DesignMatrix, KnotState


def default_c(n: int) -> float:
    """Unit-information scale n for larger samples, 200 for small ones."""
    return float(n) if n >= 100 else 200.0


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters: coefficient scale c, knot-count rate lam, cap L, spline degree."""

    c: float
    lam: float = 3.0
    max_knots: int = 10
    degree: int = 3

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("c must be positive")
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.max_knots < 1:
            raise ValueError("max_knots must be >= 1")

    @classmethod
    def for_curve_fitting(cls, n: int, degree: int = 3) -> "PriorConfig":
        return cls(c=default_c(n), lam=3.0, max_knots=10, degree=degree)


def log_trunc_poisson(size: int, config: PriorConfig) -> float:
    """Unnormalized log-weight lam^|z| / |z|! truncated at max_knots."""
    if size < 0:
        raise ValueError("size must be >= 0")
    if size > config.max_knots:
        return -math.inf
    return size * math.log(config.lam) - math.lgamma(size + 1)


def log_gamma_prior(state: KnotState) -> float:
    """Product of uniform densities over the knot intervals (all K_max of them)."""
    part = state.partition
    if not np.all(part.contains(state.gamma)):
        return -math.inf
    return part.log_uniform_density


def log_gprior(beta, sigma2: float, design: DesignMatrix, config: PriorConfig) -> float:
    """Zero-mean Gaussian prior on coefficients with covariance sigma2*c*(X'X)^-1."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    beta = np.asarray(beta, dtype=float)
    m = design.m
    if beta.shape != (m,):
        raise ValueError("beta length must match design columns")
    r = design.r_matrix()
    quad = float(np.sum((r @ beta) ** 2))  # beta' X'X beta
    logdet_gram = design.gram_logdet()
    return (
        -0.5 * m * math.log(2.0 * math.pi * sigma2 * config.c)
        + 0.5 * logdet_gram
        - 0.5 * quad / (sigma2 * config.c)
    )


def sample_z_prior(rng: np.random.Generator, k_max: int, config: PriorConfig) -> np.ndarray:
    """Exact draw of z from the per-configuration weight lam^|z|/|z|!, |z| <= L.

    Marginally P(|z|=s) is proportional to C(k_max, s) lam^s / s!; given the
    size, the active set is uniform.
    """
    cap = min(config.max_knots, k_max)
    sizes = np.arange(cap + 1)
    logw = (
        sizes * math.log(config.lam)
        - np.array([math.lgamma(s + 1) for s in sizes])
        + np.array([math.lgamma(k_max + 1) - math.lgamma(s + 1) - math.lgamma(k_max - s + 1) for s in sizes])
    )
    w = np.exp(logw - logw.max())
    size = int(rng.choice(sizes, p=w / w.sum()))
    z = np.zeros(k_max, dtype=np.uint8)
    if size:
        z[rng.choice(k_max, size=size, replace=False)] = 1
    return z
