"""Post-chain estimation: MAP and model-averaged curves, bands, diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .basis import DesignBuilder, Dataset, IntervalPartition, KnotState, RankDeficiencyError
from .priors import PriorConfig


@dataclass
class ChainSample:
    """One recorded state; beta is None on the conjugate (marginalized) path."""

    z: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray | None
    log_post: float
    nuisance: float | None = None

    @property
    def size(self) -> int:
        return int(self.z.sum())


class MoveCounters:
    """Proposal/acceptance bookkeeping keyed by move name."""

    def __init__(self):
        self.proposed: dict[str, int] = {}
        self.accepted: dict[str, int] = {}

    def bump(self, move: str, accepted: bool):
        self.proposed[move] = self.proposed.get(move, 0) + 1
        if accepted:
            self.accepted[move] = self.accepted.get(move, 0) + 1

    def rate(self, move: str) -> float:
        p = self.proposed.get(move, 0)
        return self.accepted.get(move, 0) / p if p else 0.0

    def as_dict(self) -> dict:
        return {
            m: {"proposed": p, "accepted": self.accepted.get(m, 0), "rate": self.rate(m)}
            for m, p in sorted(self.proposed.items())
        }


@dataclass
class Chain:
    """Ordered MCMC record plus running MAP tracker and BMA accumulator."""

    samples: list[ChainSample]
    map_index: int
    bma_grid: np.ndarray
    bma_accumulator: np.ndarray
    bma_count: int
    partition: IntervalPartition
    builder: DesignBuilder
    path: str  # "conjugate" | "glm"
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def map_sample(self) -> ChainSample:
        return self.samples[self.map_index]

    def state_at(self, i: int) -> KnotState:
        s = self.samples[i]
        return KnotState(s.z.copy(), s.gamma.copy(), self.partition)

    def log_post_trace(self) -> np.ndarray:
        return np.array([s.log_post for s in self.samples])

    def size_trace(self) -> np.ndarray:
        return np.array([s.size for s in self.samples])


def plugin_coefficients(sample: ChainSample, chain: Chain, data: Dataset,
                        priors: PriorConfig, shrunken: bool = False):
    """Per-sample curve coefficients: stored beta on the GLM path, least-squares
    plug-in on the conjugate path (optionally shrunken by c/(c+1))."""
    if chain.path == "glm":
        return sample.beta, "stored"
    state = KnotState(sample.z.copy(), sample.gamma.copy(), chain.partition)
    design = chain.builder.build(data.x, state)
    shrink = priors.c / (priors.c + 1.0)
    try:
        beta = design.least_squares(data.y)
        if shrunken:
            beta = shrink * beta
        return beta, design.basis_used
    except RankDeficiencyError:
        beta, *_ = np.linalg.lstsq(design.values, data.y, rcond=None)
        beta = shrink * beta
        if not np.all(np.isfinite(beta)):
            return None, design.basis_used
        return beta, design.basis_used


def curve_samples(chain: Chain, data: Dataset, priors: PriorConfig, grid,
                  shrunken: bool = False, block: str | None = None) -> np.ndarray:
    """Matrix of per-sample fitted curves on `grid` (rows = samples).

    `block` selects one coefficient block ("sigma" or "xi") for two-curve
    models whose design is block-diagonal; None means a single-curve model.
    Samples whose plug-in solve fails are rows of NaN.
    """
    grid = np.asarray(grid, dtype=float)
    out = np.full((len(chain.samples), grid.size), np.nan)
    for i, s in enumerate(chain.samples):
        coef, basis_used = plugin_coefficients(s, chain, data, priors, shrunken=shrunken)
        if coef is None:
            continue
        state = KnotState(s.z.copy(), s.gamma.copy(), chain.partition)
        xg = chain.builder.build(grid, state, force_kind=None if basis_used == "stored" else basis_used)
        if block is not None:
            half = coef.size // 2
            coef = coef[:half] if block == "sigma" else coef[half:]
        out[i] = xg.values @ coef
    return out


def map_estimate(chain: Chain, data: Dataset, priors: PriorConfig, grid=None):
    """Highest-posterior recorded state and its fitted curve.

    Conjugate path: plain least-squares coefficients at the MAP state.
    GLM path: the sampled coefficients stored with the MAP record.
    """
    if not chain.samples:
        raise ValueError("empty chain")
    if grid is None:
        grid = chain.bma_grid
    grid = np.asarray(grid, dtype=float)
    s = chain.map_sample
    state = KnotState(s.z.copy(), s.gamma.copy(), chain.partition)
    if chain.path == "glm":
        beta = s.beta
        xg = chain.builder.build(grid, state)
        return xg.values @ beta, state, beta
    design = chain.builder.build(data.x, state)
    beta = design.least_squares(data.y)
    xg = chain.builder.build(grid, state, force_kind=design.basis_used)
    return xg.values @ beta, state, beta


def bma_curve(chain: Chain, data: Dataset, priors: PriorConfig, grid=None,
              shrunken: bool = False) -> np.ndarray:
    """Average of per-sample plug-in curves (or sampled-beta curves on the GLM path)."""
    if not chain.samples:
        raise ValueError("empty chain")
    if grid is None:
        grid = chain.bma_grid
    curves = curve_samples(chain, data, priors, grid, shrunken=shrunken)
    ok = np.all(np.isfinite(curves), axis=1)
    if not ok.any():
        raise ValueError("all samples failed plug-in evaluation")
    return curves[ok].mean(axis=0)


def mse(curve_hat, f_true) -> float:
    """Mean squared pointwise difference between fitted and true values."""
    curve_hat = np.asarray(curve_hat, dtype=float)
    f_true = np.asarray(f_true, dtype=float)
    if curve_hat.shape != f_true.shape:
        raise ValueError("length mismatch")
    return float(np.mean((curve_hat - f_true) ** 2))


def _mixture_quantile(centers: np.ndarray, sds: np.ndarray, prob: float) -> float:
    """Quantile of an equally weighted normal mixture via bisection on the CDF."""
    from scipy.optimize import brentq
    from scipy.stats import norm

    lo = float(np.min(centers - 6 * sds))
    hi = float(np.max(centers + 6 * sds))

    def cdf(v):
        return np.mean(norm.cdf((v - centers) / sds)) - prob

    return brentq(cdf, lo, hi, xtol=1e-10)


def pointwise_bands(chain: Chain, data: Dataset, priors: PriorConfig, grid,
                    level: float = 0.95, prediction: bool = False):
    """Pointwise empirical credible band; optionally a Gaussian prediction band.

    The prediction variant mixes per-sample plug-in noise N(curve_i, s_i^2)
    where s_i^2 is the residual variance of the sample's least-squares fit.
    """
    grid = np.asarray(grid, dtype=float)
    needed = 1 if level >= 1.0 else math.ceil(2.0 / (1.0 - level))
    if len(chain.samples) < needed:
        raise ValueError(f"need at least {needed} samples for a {level:.2f} band")
    curves = curve_samples(chain, data, priors, grid)
    ok = np.all(np.isfinite(curves), axis=1)
    curves = curves[ok]
    alpha = (1.0 - level) / 2.0
    if not prediction:
        if level >= 1.0:
            return curves.min(axis=0), curves.max(axis=0)
        lower = np.quantile(curves, alpha, axis=0)
        upper = np.quantile(curves, 1.0 - alpha, axis=0)
        return lower, upper
    if chain.path != "conjugate":
        raise ValueError("prediction bands are defined for the conjugate Gaussian path")
    sds = np.empty(curves.shape[0])
    kept = np.flatnonzero(ok)
    for row, i in enumerate(kept):
        s = chain.samples[i]
        state = KnotState(s.z.copy(), s.gamma.copy(), chain.partition)
        design = chain.builder.build(data.x, state)
        beta = design.least_squares(data.y)
        dof = max(data.n - design.m, 1)
        sds[row] = math.sqrt(float(np.sum((data.y - design.values @ beta) ** 2)) / dof)
    lower = np.array([_mixture_quantile(curves[:, j], sds, alpha) for j in range(grid.size)])
    upper = np.array([_mixture_quantile(curves[:, j], sds, 1.0 - alpha) for j in range(grid.size)])
    return lower, upper


@dataclass
class DiagnosticsSummary:
    acceptance: dict
    log_post_trace: np.ndarray
    size_trace: np.ndarray
    occupancy: np.ndarray

    def as_dict(self) -> dict:
        return {
            "acceptance": self.acceptance,
            "log_post_trace": self.log_post_trace.tolist(),
            "size_trace": self.size_trace.tolist(),
            "occupancy": self.occupancy.tolist(),
        }


def diagnostics(chain: Chain) -> DiagnosticsSummary:
    """Acceptance rates by move type, posterior/size traces, knot occupancy."""
    if not chain.samples:
        raise ValueError("empty chain")
    zs = np.array([s.z for s in chain.samples])
    return DiagnosticsSummary(
        acceptance=chain.meta.get("acceptance", {}),
        log_post_trace=chain.log_post_trace(),
        size_trace=chain.size_trace(),
        occupancy=zs.mean(axis=0),
    )
