"""Sampler for non-Gaussian error models.

The coefficients no longer integrate out, so z and beta move together: a
proposed model change carries a draw from a normal proposal centred at the
new model's fitted mode with its curvature as covariance.  Accepted model
moves are followed by a burst of random-walk coefficient refreshes, and
knot locations update exactly as in the conjugate sampler but against the
full joint posterior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.linalg import solve_triangular

from .basis import DesignMatrix, IntervalPartition, KnotState, RankDeficiencyError
from .conjugate import SamplerConfig, make_rng, propose_add_delete, propose_swap
from .outputs import Chain, ChainSample, MoveCounters
from .priors import PriorConfig, log_gamma_prior, log_gprior, log_trunc_poisson, sample_z_prior

GTOL = 1e-8
MAX_NEWTON_ITER = 200
EIG_FLOOR = 1e-8
RIDGE_FACTOR = 1e-6


class FitModeError(RuntimeError):
    """Mode finding failed; the caller treats the whole model move as rejected."""


@dataclass(frozen=True)
class ProposalScales:
    """Covariance scaling for the two normal proposals plus the refresh count.

    refresh_style "random_walk" centres the refresh proposal at the current
    coefficients (symmetric); "mode" centres it at the fitted mode
    (independence proposal with the density ratio in the acceptance).  The
    mode style keeps coefficients within the reach of the narrow
    model-change proposal, which is what very small scale factors such as
    1/50 need to mix across models.
    """

    delta_z: float = 1.0
    delta_beta: float = 0.1
    kappa: int = 10
    refresh_style: str = "random_walk"

    def __post_init__(self):
        if self.delta_z <= 0 or self.delta_beta <= 0:
            raise ValueError("proposal scales must be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if self.refresh_style not in ("random_walk", "mode"):
            raise ValueError("refresh_style must be 'random_walk' or 'mode'")


@dataclass
class ModeFit:
    """Fitted mode with covariance = inverse negative Hessian of the objective."""

    beta: np.ndarray
    cov: np.ndarray
    chol: np.ndarray  # lower Cholesky factor of cov
    ridged: bool = False


def mvn_sample(rng, mean, chol, scale: float) -> np.ndarray:
    return mean + math.sqrt(scale) * (chol @ rng.standard_normal(mean.size))

def mvn_logpdf(x, mean, chol, scale: float) -> float:
    if x.size != mean.size:
        raise ValueError("dimension mismatch in proposal density")
    dev = solve_triangular(chol, x - mean, lower=True)
    return float(
        -0.5 * mean.size * math.log(2.0 * math.pi * scale)
        - np.sum(np.log(np.diag(chol)))
        - 0.5 * np.sum(dev ** 2) / scale
    )


def _objective_parts(model, design: DesignMatrix, priors: PriorConfig, mode_kind: str):
    """Value/gradient/Hessian callables for the mode objective.

    map adds the g-prior quadratic -beta'X'X beta / (2 v c); constants are
    irrelevant for the mode and curvature.
    """
    if mode_kind not in ("mle", "map"):
        raise ValueError("mode_kind must be 'mle' or 'map'")
    if mode_kind == "mle":
        return model.loglik, model.grad, model.hessian
    gram = design.values.T @ design.values
    scale = 1.0 / (model.prior_variance_factor * priors.c)

    def value(design_, beta):
        ll = model.loglik(design_, beta)
        if ll == -math.inf:
            return ll
        return ll - 0.5 * scale * float(beta @ gram @ beta)

    def grad(design_, beta):
        return model.grad(design_, beta) - scale * (gram @ beta)

    def hess(design_, beta):
        return model.hessian(design_, beta) - scale * gram

    return value, grad, hess


def _ascent_direction(neg_hess: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Solve (-H + tau I) d = g, ridging tau upward until the factorization is PD."""
    m = neg_hess.shape[0]
    tau = 0.0
    base = max(np.trace(neg_hess) / m, 1.0)
    for _ in range(30):
        try:
            chol = np.linalg.cholesky(neg_hess + tau * np.eye(m))
            d = solve_triangular(chol.T, solve_triangular(chol, g, lower=True), lower=False)
            if g @ d > 0:
                return d
        except np.linalg.LinAlgError:
            pass
        tau = max(tau * 10.0, 1e-8 * base)
    raise FitModeError("could not construct an ascent direction")


def fit_mode(model, design: DesignMatrix, priors: PriorConfig, mode_kind: str | None = None,
             start: np.ndarray | None = None) -> ModeFit:
    """Maximize the model objective by Newton steps with backtracking.

    Converges when the gradient infinity-norm drops below 1e-8; the returned
    covariance is the inverse negative Hessian at the optimum, ridged once if
    an eigenvalue falls below 1e-8 and failed outright if still not positive
    definite.
    """
    if mode_kind is None:
        mode_kind = model.mode_kind
    value, grad, hess = _objective_parts(model, design, priors, mode_kind)
    beta = model.start_beta(design) if start is None else np.asarray(start, dtype=float).copy()
    f = value(design, beta)
    if not math.isfinite(f):
        beta = model.start_beta(design)
        f = value(design, beta)
        if not math.isfinite(f):
            raise FitModeError("infeasible starting point")
    converged = False
    for _ in range(MAX_NEWTON_ITER):
        g = grad(design, beta)
        if not np.all(np.isfinite(g)):
            raise FitModeError("non-finite gradient")
        if np.max(np.abs(g)) < GTOL:
            converged = True
            break
        d = _ascent_direction(-hess(design, beta), g)
        slope = float(g @ d)
        if slope <= 1e-11 * max(1.0, abs(f)):
            # predicted gain below fp resolution of the objective: the Armijo
            # test cannot certify progress, so take the pure polish step
            cand = beta + d
            fc = value(design, cand)
            if math.isfinite(fc):
                beta, f = cand, fc
                continue
        t = 1.0
        while True:
            cand = beta + t * d
            fc = value(design, cand)
            if math.isfinite(fc) and fc >= f + 1e-4 * t * slope:
                break
            t *= 0.5
            if t < 1e-14:
                raise FitModeError("line search failed")
        beta, f = cand, fc
    if not converged:
        raise FitModeError("Newton iteration did not converge")

    neg_hess = -hess(design, beta)
    ridged = False
    eig = np.linalg.eigvalsh(neg_hess)
    if eig.min() < EIG_FLOOR:
        neg_hess = neg_hess + RIDGE_FACTOR * (np.trace(neg_hess) / design.m) * np.eye(design.m)
        ridged = True
    try:
        np.linalg.cholesky(neg_hess)
    except np.linalg.LinAlgError:
        raise FitModeError("negative Hessian not positive definite at the mode")
    cov = np.linalg.inv(neg_hess)
    cov = 0.5 * (cov + cov.T)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise FitModeError("mode covariance not positive definite")
    return ModeFit(beta=beta, cov=cov, chol=chol, ridged=ridged)


@dataclass
class GlmState:
    """Current sampler position: knots, coefficients, cached joint density and design."""

    knot_state: KnotState
    beta: np.ndarray
    log_joint: float
    design: DesignMatrix


def log_joint_posterior_glm(knot_state: KnotState, beta, model, priors: PriorConfig,
                            design: DesignMatrix | None = None) -> float:
    """Log-likelihood plus all prior components; -inf is the rejection channel."""
    if log_trunc_poisson(knot_state.size, priors) == -math.inf:
        return -math.inf
    if design is None:
        design = model.design(knot_state)
    beta = np.asarray(beta, dtype=float)
    ll = model.loglik(design, beta)
    if ll == -math.inf:
        return -math.inf
    try:
        lg = log_gprior(beta, model.prior_variance_factor, design, priors)
    except RankDeficiencyError:
        return -math.inf
    return (ll + lg + log_trunc_poisson(knot_state.size, priors)
            + log_gamma_prior(knot_state) + model.log_nuisance_prior())


class ModeCache:
    """Cache of fitted modes keyed by (z, active-gamma signature).

    Safe across iterations because the key pins the model exactly; it must
    be cleared when anything else entering the objective changes (the
    Gaussian model's variance refresh).
    """

    MAX_ENTRIES = 20000

    def __init__(self, model, priors: PriorConfig):
        self.model = model
        self.priors = priors
        self.store: dict = {}
        self.fit_calls = 0

    @staticmethod
    def key(knot_state: KnotState):
        return (knot_state.z.tobytes(),
                np.round(knot_state.active_gammas(), 12).tobytes())

    def get(self, knot_state: KnotState, design: DesignMatrix,
            warm_design: DesignMatrix | None = None,
            warm_beta: np.ndarray | None = None) -> ModeFit:
        k = self.key(knot_state)
        hit = self.store.get(k)
        if hit is not None:
            return hit
        start = None
        if warm_design is not None and warm_beta is not None:
            start = self.model.start_beta(design)
            index = {lab: i for i, lab in enumerate(warm_design.column_labels)}
            for j, lab in enumerate(design.column_labels):
                i = index.get(lab)
                if i is not None:
                    start[j] = warm_beta[i]
            if self.model.loglik(design, start) == -math.inf:
                start = None
        self.fit_calls += 1
        if len(self.store) >= self.MAX_ENTRIES:
            self.store.clear()
        fit = fit_mode(self.model, design, self.priors, start=start)
        self.store[k] = fit
        return fit

    def clear(self):
        self.store.clear()


def joint_update_z_beta(state: GlmState, model, priors: PriorConfig,
                        scales: ProposalScales, rng, cache: ModeCache,
                        counters: MoveCounters, move_split: float = 0.5,
                        diag: dict | None = None):
    """Propose a model change and fresh coefficients together; accept or keep."""
    if rng.uniform() < move_split:
        prop_knots, move = propose_add_delete(state.knot_state, rng)
        move_name = "joint_add_delete"
    else:
        prop_knots, move = propose_swap(state.knot_state, rng)
        move_name = "joint_add_delete" if move != "swap" else "joint_swap"
    if prop_knots.size > priors.max_knots:
        counters.bump(move_name, False)
        if diag is not None:
            diag["truncation_rejects"] = diag.get("truncation_rejects", 0) + 1
        return state, False
    prop_design = model.design(prop_knots)
    try:
        prop_design.factor()
        mode_prop = cache.get(prop_knots, prop_design,
                              warm_design=state.design, warm_beta=state.beta)
        mode_cur = cache.get(state.knot_state, state.design,
                             warm_design=state.design, warm_beta=state.beta)
    except (RankDeficiencyError, FitModeError):
        counters.bump(move_name, False)
        if diag is not None:
            diag["fit_failures"] = diag.get("fit_failures", 0) + 1
        return state, False
    beta_prop = mvn_sample(rng, mode_prop.beta, mode_prop.chol, scales.delta_z)
    lj_prop = log_joint_posterior_glm(prop_knots, beta_prop, model, priors, prop_design)
    if lj_prop == -math.inf:
        counters.bump(move_name, False)
        return state, False
    q_fwd = mvn_logpdf(beta_prop, mode_prop.beta, mode_prop.chol, scales.delta_z)
    q_rev = mvn_logpdf(state.beta, mode_cur.beta, mode_cur.chol, scales.delta_z)
    delta = (lj_prop + q_rev) - (state.log_joint + q_fwd)
    accepted = math.log(rng.uniform()) < delta
    counters.bump(move_name, accepted)
    if accepted:
        return GlmState(prop_knots, beta_prop, lj_prop, prop_design), True
    return state, False


def refresh_beta(state: GlmState, model, priors: PriorConfig, scales: ProposalScales,
                 rng, mode_cur: ModeFit, counters: MoveCounters | None = None) -> GlmState:
    """kappa extra coefficient updates at fixed (z, gamma).

    Random-walk style proposes around the current coefficients (symmetric
    proposal, plain posterior ratio); mode style proposes around the fitted
    mode and corrects with the proposal densities.
    """
    centred_at_mode = scales.refresh_style == "mode"
    for _ in range(scales.kappa):
        if centred_at_mode:
            prop = mvn_sample(rng, mode_cur.beta, mode_cur.chol, scales.delta_beta)
        else:
            prop = mvn_sample(rng, state.beta, mode_cur.chol, scales.delta_beta)
        lj = log_joint_posterior_glm(state.knot_state, prop, model, priors, state.design)
        delta = lj - state.log_joint
        if centred_at_mode:
            delta += (mvn_logpdf(state.beta, mode_cur.beta, mode_cur.chol, scales.delta_beta)
                      - mvn_logpdf(prop, mode_cur.beta, mode_cur.chol, scales.delta_beta))
        accepted = math.log(rng.uniform()) < delta
        if accepted:
            state = GlmState(state.knot_state, prop, lj, state.design)
        if counters is not None:
            counters.bump("refresh", accepted)
    return state


def update_gamma_glm(state: GlmState, model, priors: PriorConfig, rng,
                     counters: MoveCounters | None = None) -> GlmState:
    """Knot-location sweep under the full joint posterior, coefficients fixed."""
    knots = state.knot_state
    part = knots.partition
    for k in range(part.k_max):
        new_gamma = part.sample_gamma(rng, k)
        if not knots.z[k]:
            knots = knots.with_gamma(k, new_gamma)
            state = GlmState(knots, state.beta, state.log_joint, state.design)
            continue
        proposal = knots.with_gamma(k, new_gamma)
        prop_design = model.design(proposal)
        lj = log_joint_posterior_glm(proposal, state.beta, model, priors, prop_design)
        accepted = math.log(rng.uniform()) < lj - state.log_joint
        if accepted:
            knots = proposal
            state = GlmState(knots, state.beta, lj, prop_design)
        if counters is not None:
            counters.bump("gamma", accepted)
    return state


def initial_glm_state(partition: IntervalPartition, model, priors: PriorConfig,
                      rng, max_tries: int = 200) -> GlmState:
    """Knots from the prior, coefficients at the fitted mode of the initial model."""
    for _ in range(max_tries):
        z = sample_z_prior(rng, partition.k_max, priors)
        knots = KnotState(z, partition.sample_gamma(rng), partition)
        try:
            design = model.design(knots)
            design.factor()
            fit = fit_mode(model, design, priors)
        except (RankDeficiencyError, FitModeError):
            continue
        if hasattr(model, "initialize"):
            model.initialize(design, fit.beta, rng)
        lj = log_joint_posterior_glm(knots, fit.beta, model, priors, design)
        if math.isfinite(lj):
            return GlmState(knots, fit.beta, lj, design)
    raise RuntimeError("could not find a finite-posterior initial state")


def run_glm_chain(partition: IntervalPartition, model, priors: PriorConfig,
                  config: SamplerConfig, scales: ProposalScales,
                  bma_points=None) -> Chain:
    """Full chain: joint (z, beta) moves, refresh bursts on acceptance, gamma sweeps.

    Post-burnin records keep the sampled coefficients (no plug-ins), the MAP
    index tracks the best joint log posterior, and single-curve models
    accumulate their linear predictor on `bma_points`.
    """
    rng = make_rng(config.seed, stream=1)
    counters = MoveCounters()
    diag: dict = {}
    cache = ModeCache(model, priors)
    state = initial_glm_state(partition, model, priors, rng)

    if bma_points is None:
        data = getattr(model, "data", None)
        bma_points = data.x if data is not None else getattr(model, "days")
    bma_points = np.asarray(bma_points, dtype=float)
    single_curve = hasattr(model, "grid_design")

    samples: list[ChainSample] = []
    bma_acc = np.zeros(bma_points.size)
    map_index, map_log = -1, -math.inf

    for it in range(config.burnin + config.iterations):
        for _ in range(config.z_steps_per_sweep):
            state, accepted = joint_update_z_beta(state, model, priors, scales, rng,
                                                  cache, counters, config.move_split, diag)
            if accepted and scales.kappa > 0:
                mode_cur = cache.get(state.knot_state, state.design)
                state = refresh_beta(state, model, priors, scales, rng, mode_cur, counters)
        if config.gamma_updates:
            for _ in range(config.gamma_sweeps):
                state = update_gamma_glm(state, model, priors, rng, counters)
        if model.refresh_nuisance(state.design, state.beta, priors, rng):
            cache.clear()  # the nuisance enters the mode objective and curvature
            lj = log_joint_posterior_glm(state.knot_state, state.beta, model, priors, state.design)
            state = GlmState(state.knot_state, state.beta, lj, state.design)
        if it < config.burnin:
            continue
        samples.append(ChainSample(state.knot_state.z.copy(), state.knot_state.gamma.copy(),
                                   state.beta.copy(), state.log_joint,
                                   nuisance=getattr(model, "sigma2", None)))
        if single_curve:
            grid_design = model.grid_design(bma_points, state.knot_state)
            bma_acc += grid_design.values @ state.beta
        if state.log_joint > map_log:
            map_log = state.log_joint
            map_index = len(samples) - 1

    builder = getattr(model, "builder")
    return Chain(
        samples=samples,
        map_index=map_index,
        bma_grid=bma_points,
        bma_accumulator=bma_acc,
        bma_count=len(samples),
        partition=partition,
        builder=builder,
        path="glm",
        meta={
            "acceptance": counters.as_dict(),
            "config": asdict(config),
            "priors": asdict(priors),
            "scales": asdict(scales),
            "seed": config.seed,
            "mode_fits": cache.fit_calls,
            **diag,
        },
    )
