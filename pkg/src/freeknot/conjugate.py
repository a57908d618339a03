"""Gaussian-error sampler on the marginalized (z, gamma) posterior.

With the conjugate coefficient prior and the 1/sigma^2 variance prior, the
regression coefficients and noise variance integrate out analytically,
leaving a posterior over knot inclusion and location proportional to

    (c+1)^(-m/2) * S(Y)^(-n/2) * pi_z(z) * pi_gamma(gamma)

where m is the active column count and S(Y) the shrinkage-adjusted residual
quantity.  The sampler alternates randomized add/delete/swap updates of z
with independence Metropolis-Hastings refreshes of gamma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .basis import (
    Dataset,
    DesignBuilder,
    DesignMatrix,
    IntervalPartition,
    KnotState,
    RankDeficiencyError,
)
from .outputs import Chain, ChainSample, MoveCounters
from .priors import PriorConfig, log_gamma_prior, log_trunc_poisson, sample_z_prior

OVERFIT_FLOOR = 1e-12


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox counter-based generator; (seed, stream) pins the stream exactly."""
    if seed < 0:
        raise ValueError("seed must be >= 0")
    return np.random.Generator(np.random.Philox(key=np.array([seed, stream], dtype=np.uint64)))


@dataclass(frozen=True)
class SamplerConfig:
    """Chain schedule: sweep counts, move mix and seeding."""

    iterations: int = 1000
    burnin: int = 500
    z_steps_per_sweep: int = 20
    gamma_sweeps: int = 1
    move_split: float = 0.5  # probability of add/delete versus swap
    seed: int = 0
    gamma_updates: bool = True

    def __post_init__(self):
        if self.iterations <= 0:
            raise ValueError("iterations must be positive")
        if self.burnin < 0:
            raise ValueError("burnin must be >= 0")
        if not 0.0 < self.move_split < 1.0:
            raise ValueError("move_split must be in (0, 1)")


@dataclass(frozen=True)
class MarginalPosteriorValue:
    log_value: float
    s_value: float
    active_count: int
    flag: str = "ok"


def shrinkage_residual(y: np.ndarray, design: DesignMatrix, c: float) -> float:
    """Y'Y - c/(c+1) * ||Q'Y||^2, floored at its analytic minimum Y'Y/(c+1)."""
    qty = design.apply_qt(y)
    yty = float(y @ y)
    s = yty - c / (c + 1.0) * float(qty @ qty)
    return max(s, yty / (c + 1.0))


def log_marginal_posterior(state: KnotState, data: Dataset, priors: PriorConfig,
                           builder: DesignBuilder | None = None,
                           return_design: bool = False):
    """Log of the marginalized posterior at (z, gamma), up to a constant."""
    if builder is None:
        builder = DesignBuilder("truncated_power", priors.degree, x_range=data.x_range)
    size = state.size
    lp_size = log_trunc_poisson(size, priors)
    if lp_size == -math.inf:
        value = MarginalPosteriorValue(-math.inf, math.nan, size, "truncated")
        return (value, None) if return_design else value
    design = builder.build(data.x, state)
    try:
        s = shrinkage_residual(data.y, design, priors.c)
    except RankDeficiencyError:
        value = MarginalPosteriorValue(-math.inf, math.nan, size, "rank_deficient")
        return (value, design) if return_design else value
    yty = float(data.y @ data.y)
    if s < yty * OVERFIT_FLOOR:
        value = MarginalPosteriorValue(-math.inf, s, size, "overfit_floor")
        return (value, design) if return_design else value
    log_value = (
        -0.5 * design.m * math.log(priors.c + 1.0)
        - 0.5 * data.n * math.log(s)
        + lp_size
        + log_gamma_prior(state)
    )
    value = MarginalPosteriorValue(log_value, s, size)
    return (value, design) if return_design else value


def propose_add_delete(state: KnotState, rng: np.random.Generator) -> tuple[KnotState, str]:
    """Flip one uniformly chosen inclusion bit (symmetric proposal)."""
    k = int(rng.integers(state.partition.k_max))
    move = "delete" if state.z[k] else "add"
    return state.flipped(k), move


def propose_swap(state: KnotState, rng: np.random.Generator) -> tuple[KnotState, str]:
    """Exchange two distinct inclusion bits; redirects to add/delete when K_max = 1."""
    k_max = state.partition.k_max
    if k_max < 2:
        return propose_add_delete(state, rng)
    i = int(rng.integers(k_max))
    j = int(rng.integers(k_max - 1))
    if j >= i:
        j += 1
    return state.swapped(i, j), "swap"


@dataclass
class ZStepResult:
    state: KnotState
    value: MarginalPosteriorValue
    design: DesignMatrix | None
    accepted: bool
    move: str


def update_z_step(state: KnotState, data: Dataset, priors: PriorConfig,
                  rng: np.random.Generator, builder: DesignBuilder | None = None,
                  current: MarginalPosteriorValue | None = None,
                  current_design: DesignMatrix | None = None,
                  move_split: float = 0.5) -> ZStepResult:
    """One Metropolis update of z (add/delete with probability move_split, else swap)."""
    if builder is None:
        builder = DesignBuilder("truncated_power", priors.degree, x_range=data.x_range)
    if current is None:
        current, current_design = log_marginal_posterior(state, data, priors, builder, return_design=True)
    if rng.uniform() < move_split:
        proposal, move = propose_add_delete(state, rng)
    else:
        proposal, move = propose_swap(state, rng)
    if move == "swap" and np.array_equal(proposal.z, state.z):
        # identity swap: ratio exactly 1, counted as an acceptance
        return ZStepResult(state, current, current_design, True, move)
    prop_value, prop_design = log_marginal_posterior(proposal, data, priors, builder, return_design=True)
    delta = prop_value.log_value - current.log_value
    if math.log(rng.uniform()) < delta:
        return ZStepResult(proposal, prop_value, prop_design, True, move)
    return ZStepResult(state, current, current_design, False, move)


def update_gamma_step(state: KnotState, data: Dataset, priors: PriorConfig,
                      rng: np.random.Generator, builder: DesignBuilder | None = None,
                      current: MarginalPosteriorValue | None = None,
                      counters: MoveCounters | None = None):
    """Sweep gamma_1..gamma_Kmax: prior refresh when inactive, independence MH when active."""
    if builder is None:
        builder = DesignBuilder("truncated_power", priors.degree, x_range=data.x_range)
    if current is None:
        current = log_marginal_posterior(state, data, priors, builder)
    part = state.partition
    for k in range(part.k_max):
        new_gamma = part.sample_gamma(rng, k)
        if not state.z[k]:
            state = state.with_gamma(k, new_gamma)  # exact conditional draw
            continue
        proposal = state.with_gamma(k, new_gamma)
        prop_value = log_marginal_posterior(proposal, data, priors, builder)
        accepted = math.log(rng.uniform()) < prop_value.log_value - current.log_value
        if accepted:
            state, current = proposal, prop_value
        if counters is not None:
            counters.bump("gamma", accepted)
    return state, current


def posterior_mean_beta(state: KnotState, data: Dataset, priors: PriorConfig,
                        builder: DesignBuilder | None = None) -> np.ndarray:
    """Conditional posterior mean of the coefficients: c/(c+1) times least squares."""
    if builder is None:
        builder = DesignBuilder("truncated_power", priors.degree, x_range=data.x_range)
    design = builder.build(data.x, state)
    return priors.c / (priors.c + 1.0) * design.least_squares(data.y)


def initial_state(partition: IntervalPartition, priors: PriorConfig,
                  rng: np.random.Generator, data: Dataset,
                  builder: DesignBuilder, max_tries: int = 200):
    """Draw (z, gamma) from the priors, retrying until the posterior is finite."""
    for _ in range(max_tries):
        z = sample_z_prior(rng, partition.k_max, priors)
        gamma = partition.sample_gamma(rng)
        state = KnotState(z, gamma, partition)
        value, design = log_marginal_posterior(state, data, priors, builder, return_design=True)
        if math.isfinite(value.log_value):
            return state, value, design
    raise RuntimeError("could not find a finite-posterior initial state")


def run_gaussian_chain(data: Dataset, partition: IntervalPartition, priors: PriorConfig,
                       config: SamplerConfig, builder: DesignBuilder | None = None,
                       bma_points=None) -> Chain:
    """Metropolis-within-Gibbs chain on (z, gamma) for Gaussian-error models.

    Each iteration runs `z_steps_per_sweep` z updates then a gamma sweep;
    post-burnin states are recorded with their log posterior, the running
    MAP index is tracked, and least-squares plug-in curves are accumulated
    on `bma_points` (default: the observed x).
    """
    if builder is None:
        builder = DesignBuilder("truncated_power", priors.degree, x_range=data.x_range)
    rng = make_rng(config.seed, stream=1)
    if bma_points is None:
        bma_points = data.x
    bma_points = np.asarray(bma_points, dtype=float)

    state, value, design = initial_state(partition, priors, rng, data, builder)
    counters = MoveCounters()
    samples: list[ChainSample] = []
    bma_acc = np.zeros(bma_points.size)
    map_index = -1
    map_log = -math.inf

    for it in range(config.burnin + config.iterations):
        for _ in range(config.z_steps_per_sweep):
            res = update_z_step(state, data, priors, rng, builder,
                                current=value, current_design=design,
                                move_split=config.move_split)
            state, value, design = res.state, res.value, res.design
            counters.bump("add_delete" if res.move in ("add", "delete") else "swap", res.accepted)
        if config.gamma_updates:
            for _ in range(config.gamma_sweeps):
                state, value = update_gamma_step(state, data, priors, rng, builder,
                                                 current=value, counters=counters)
            design = None  # gamma moves invalidate the cached design
        if it < config.burnin:
            continue
        if design is None:
            value, design = log_marginal_posterior(state, data, priors, builder, return_design=True)
        samples.append(ChainSample(state.z.copy(), state.gamma.copy(), None, value.log_value))
        beta = design.least_squares(data.y)
        grid_design = builder.build(bma_points, state, force_kind=design.basis_used)
        bma_acc += grid_design.values @ beta
        if value.log_value > map_log:
            map_log = value.log_value
            map_index = len(samples) - 1

    return Chain(
        samples=samples,
        map_index=map_index,
        bma_grid=bma_points,
        bma_accumulator=bma_acc,
        bma_count=len(samples),
        partition=partition,
        builder=builder,
        path="conjugate",
        meta={
            "acceptance": counters.as_dict(),
            "config": asdict(config),
            "priors": asdict(priors),
            "seed": config.seed,
        },
    )
