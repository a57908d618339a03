"""Replicate studies: repeated simulate/fit/score runs for the benchmark examples."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import DesignBuilder, default_intervals
from .conjugate import SamplerConfig, run_gaussian_chain
from .glm import ProposalScales, run_glm_chain
from .models import PoissonLogLinkModel
from .outputs import map_estimate, mse
from .priors import PriorConfig, default_c
from .simulate import simulate_example

POISSON_BOUNDS = (0.02, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.98)

# benchmark interval spacing: every n_x sorted x values per example at large n
EXAMPLE_NX = {"sk1": 4, "dms2": 10, "dgk3": 4}


@dataclass
class StudySettings:
    """Per-replicate fit settings for a benchmark study."""

    example_id: str
    n: int
    degree: int = 3
    n_x: int | None = None
    c: float | None = None
    lam: float | None = None
    max_knots: int = 10
    basis: str = "truncated_power"
    iterations: int = 1000
    burnin: int = 500
    z_steps: int = 20
    gamma_sweeps: int = 1
    kappa: int = 10
    delta_z: float = 1.0 / 50.0
    delta_beta: float = 1.0 / 50.0

    def resolved_nx(self) -> int:
        if self.n_x is not None:
            return self.n_x
        if self.n <= 20:
            return 2
        return EXAMPLE_NX[self.example_id]

    @classmethod
    def table_curve(cls, example_id: str, n: int) -> "StudySettings":
        """Benchmark settings for the Gaussian curve examples."""
        return cls(example_id=example_id, n=n,
                   basis="bspline" if n <= 20 else "truncated_power")

    @classmethod
    def table_poisson(cls, degree: int, n: int = 500) -> "StudySettings":
        """Benchmark settings for the Poisson example."""
        return cls(example_id="poisson", n=n, degree=degree, lam=1.0,
                   iterations=5000, burnin=1000, z_steps=10, kappa=10)


def fit_replicate(settings: StudySettings, seed: int):
    """Simulate one dataset with `seed` and fit it; returns (map_mse, bma_mse)."""
    data, f_true = simulate_example(settings.example_id, settings.n, seed=seed)
    truth = f_true(data.x)
    c = settings.c if settings.c is not None else default_c(data.n)
    if settings.example_id == "poisson":
        priors = PriorConfig(c=c if settings.c is not None else float(data.n),
                             lam=settings.lam if settings.lam is not None else 1.0,
                             max_knots=settings.max_knots, degree=settings.degree)
        partition = default_intervals(data, "explicit", bounds=POISSON_BOUNDS)
        builder = DesignBuilder("truncated_power", settings.degree, x_range=data.x_range)
        model = PoissonLogLinkModel(data, builder)
        config = SamplerConfig(iterations=settings.iterations, burnin=settings.burnin,
                               z_steps_per_sweep=settings.z_steps,
                               gamma_sweeps=settings.gamma_sweeps, seed=seed)
        scales = ProposalScales(settings.delta_z, settings.delta_beta, settings.kappa)
        chain = run_glm_chain(partition, model, priors, config, scales, bma_points=data.x)
        data_for_curves = data
    else:
        priors = PriorConfig(c=c, lam=settings.lam if settings.lam is not None else 3.0,
                             max_knots=settings.max_knots, degree=settings.degree)
        partition = default_intervals(data, "every_nx", n_x=settings.resolved_nx())
        builder = DesignBuilder(settings.basis, settings.degree, x_range=data.x_range)
        config = SamplerConfig(iterations=settings.iterations, burnin=settings.burnin,
                               z_steps_per_sweep=settings.z_steps,
                               gamma_sweeps=settings.gamma_sweeps, seed=seed)
        chain = run_gaussian_chain(data, partition, priors, config, builder=builder,
                                   bma_points=data.x)
        data_for_curves = data
    map_curve, _, _ = map_estimate(chain, data_for_curves, priors, grid=data.x)
    bma_curve_vals = chain.bma_accumulator / chain.bma_count
    return mse(map_curve, truth), mse(bma_curve_vals, truth)


@dataclass
class StudyResult:
    example_id: str
    n: int
    replicates: int
    map_mse: list = field(default_factory=list)
    bma_mse: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    @property
    def map_mean(self) -> float:
        return float(np.mean(self.map_mse))

    @property
    def map_sd(self) -> float:
        return float(np.std(self.map_mse, ddof=1)) if len(self.map_mse) > 1 else 0.0

    @property
    def bma_mean(self) -> float:
        return float(np.mean(self.bma_mse))

    @property
    def bma_sd(self) -> float:
        return float(np.std(self.bma_mse, ddof=1)) if len(self.bma_mse) > 1 else 0.0

    def summary(self) -> dict:
        return {
            "example": self.example_id,
            "n": self.n,
            "replicates": self.replicates,
            "map_mse_mean": self.map_mean,
            "map_mse_sd": self.map_sd,
            "bma_mse_mean": self.bma_mean,
            "bma_mse_sd": self.bma_sd,
            "failures": len(self.failures),
        }


class StudyError(RuntimeError):
    pass


def replicate_study(settings: StudySettings, replicates: int = 50, base_seed: int = 0,
                    progress=None) -> StudyResult:
    """Run `replicates` simulate/fit/score rounds with seeds base_seed + r.

    Individual failures are recorded and excluded; the study aborts when more
    than 10% of replicates fail.
    """
    if replicates < 2:
        raise ValueError("replicates must be >= 2")
    result = StudyResult(settings.example_id, settings.n, replicates)
    for r in range(1, replicates + 1):
        try:
            m, b = fit_replicate(settings, seed=base_seed + r)
            result.map_mse.append(m)
            result.bma_mse.append(b)
        except Exception as exc:  # noqa: BLE001 - study-level quarantine
            result.failures.append(f"replicate {r}: {exc}")
        if progress is not None:
            progress(r, replicates)
    if len(result.failures) > 0.1 * replicates:
        raise StudyError(
            f"{len(result.failures)} of {replicates} replicates failed: {result.failures[:3]}"
        )
    return result
