"""Command-line harness: data ingestion, configuration, fitting, studies, reports.

Subcommands: fit, simulate, replicate-study, tombs, gpd.  Exit codes:
0 success, 1 runtime failure, 2 validation failure.  The FREEKNOT_OUTDIR
environment variable overrides the configured output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, fields, replace

import numpy as np

from .basis import Dataset, DesignBuilder, default_intervals
from .conjugate import SamplerConfig, log_marginal_posterior, run_gaussian_chain
from .glm import ProposalScales, run_glm_chain
from .models import (
    GpdConfig,
    GpdSeasonalModel,
    PoissonLogLinkModel,
    return_level,
    tombs_coefficients,
)
from .outputs import (
    Chain,
    bma_curve,
    curve_samples,
    diagnostics,
    map_estimate,
    pointwise_bands,
)
from .priors import PriorConfig, default_c
from .simulate import EXAMPLE_IDS, simulate_example
from .studies import StudySettings, replicate_study

OUTDIR_ENV = "FREEKNOT_OUTDIR"


class ConfigError(ValueError):
    """Invalid configuration or input; maps to exit code 2."""


@dataclass
class RunConfig:
    """Every tunable the commands accept, with the library defaults."""

    model_kind: str = "gaussian"
    degree: int = 3
    basis: str = "truncated_power"
    interval_strategy: str = "every_nx"
    n_x: int = 4
    k_max: int = 10
    bounds: tuple | None = None
    c: float | None = None  # None -> n for n >= 100 else 200
    lam: float | None = None  # None -> 3 for curves, 1 for changepoint/gpd
    max_knots: int = 10
    iterations: int = 1000
    burnin: int = 500
    z_steps: int = 20
    gamma_sweeps: int = 1
    kappa: int = 10
    delta_z: float = 1.0
    delta_beta: float = 0.1
    move_split: float = 0.5
    seed: int = 0
    estimator: str = "both"
    grid_size: int = 200
    output_dir: str = "freeknot_out"
    band_level: float = 0.95
    tombs_delta: float = 0.54
    gpd_threshold: float = 0.0
    gpd_zeta_u: float = 0.05
    gpd_n_y: float = 365.25
    return_years: float = 50.0


def _parse_bounds(text: str) -> tuple:
    try:
        vals = tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"cannot parse interval bounds: {exc}") from None
    if len(vals) < 2:
        raise ConfigError("intervals.bounds needs at least two values")
    return vals


# dotted config key -> (RunConfig attribute, parser)
CONFIG_KEYS = {
    "model.kind": ("model_kind", str),
    "model.degree": ("degree", int),
    "model.basis": ("basis", str),
    "intervals.strategy": ("interval_strategy", str),
    "intervals.n_x": ("n_x", int),
    "intervals.count": ("k_max", int),
    "intervals.bounds": ("bounds", _parse_bounds),
    "prior.c": ("c", float),
    "prior.lambda": ("lam", float),
    "prior.max_knots": ("max_knots", int),
    "sampler.iterations": ("iterations", int),
    "sampler.burnin": ("burnin", int),
    "sampler.z_steps": ("z_steps", int),
    "sampler.gamma_sweeps": ("gamma_sweeps", int),
    "sampler.kappa": ("kappa", int),
    "sampler.delta_z": ("delta_z", float),
    "sampler.delta_beta": ("delta_beta", float),
    "sampler.move_split": ("move_split", float),
    "sampler.seed": ("seed", int),
    "estimator": ("estimator", str),
    "grid.size": ("grid_size", int),
    "output.dir": ("output_dir", str),
    "bands.level": ("band_level", float),
    "tombs.delta": ("tombs_delta", float),
    "gpd.threshold": ("gpd_threshold", float),
    "gpd.zeta_u": ("gpd_zeta_u", float),
    "gpd.n_y": ("gpd_n_y", float),
    "gpd.return_years": ("return_years", float),
}

MODEL_KINDS = ("gaussian", "poisson", "changepoint", "gpd")


def load_config_file(path: str, config: RunConfig) -> RunConfig:
    """Flat `key = value` text with dotted sections; unknown keys are errors."""
    updates = {}
    try:
        lines = open(path, encoding="utf-8").read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        spec = CONFIG_KEYS.get(key)
        if spec is None:
            raise ConfigError(f"{path}:{lineno}: unknown config key '{key}'")
        attr, parser = spec
        try:
            updates[attr] = parser(value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for '{key}': {exc}") from None
    return replace(config, **updates)


def validate_config(config: RunConfig) -> RunConfig:
    if config.model_kind not in MODEL_KINDS:
        raise ConfigError(f"model.kind must be one of {MODEL_KINDS}")
    if config.degree < 1:
        raise ConfigError("model.degree must be >= 1")
    if config.basis not in ("truncated_power", "bspline"):
        raise ConfigError("model.basis must be truncated_power or bspline")
    if config.interval_strategy not in ("every_nx", "equal_count", "explicit"):
        raise ConfigError("intervals.strategy must be every_nx, equal_count or explicit")
    if config.iterations <= 0 or config.burnin < 0:
        raise ConfigError("sampler.iterations must be > 0 and burnin >= 0")
    if not 0.0 < config.move_split < 1.0:
        raise ConfigError("sampler.move_split must be in (0, 1)")
    if config.estimator not in ("map", "bma", "both"):
        raise ConfigError("estimator must be map, bma or both")
    if config.seed < 0:
        raise ConfigError("sampler.seed must be >= 0")
    if config.grid_size < 2:
        raise ConfigError("grid.size must be >= 2")
    if not 0.0 < config.band_level <= 1.0:
        raise ConfigError("bands.level must be in (0, 1]")
    if not 0.0 < config.gpd_zeta_u < 1.0:
        raise ConfigError("gpd.zeta_u must be in (0, 1)")
    env_dir = os.environ.get(OUTDIR_ENV)
    if env_dir:
        config = replace(config, output_dir=env_dir)
    return config


def read_columns(path: str, names: tuple[str, ...]) -> dict[str, np.ndarray]:
    """Comma-delimited data with a header row; errors name the missing column."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            for name in names:
                if name not in header:
                    raise ConfigError(f"column '{name}' not found")
            rows = list(reader)
    except OSError as exc:
        raise ConfigError(f"cannot read data file: {exc}") from None
    if not rows:
        raise ConfigError("data file has no rows")
    out = {}
    for name in names:
        try:
            out[name] = np.array([float(row[name]) for row in rows])
        except (TypeError, ValueError):
            raise ConfigError(f"column '{name}' has non-numeric entries") from None
    return out


def fmt(value: float) -> str:
    return f"{value:.12g}"


def _json_rounder(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(fmt(float(obj)))
    if isinstance(obj, np.ndarray):
        return [_json_rounder(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {k: _json_rounder(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_rounder(v) for v in obj]
    return obj


class BundleWriter:
    """Stages every output file, then moves the complete set into place."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.staged: list[tuple[str, str]] = []
        parent = os.path.dirname(os.path.abspath(out_dir)) or "."
        os.makedirs(parent, exist_ok=True)
        self.tmp = tempfile.mkdtemp(prefix=".freeknot-stage-", dir=parent)

    def path(self, name: str) -> str:
        staged = os.path.join(self.tmp, name)
        self.staged.append((staged, os.path.join(self.out_dir, name)))
        return staged

    def commit(self):
        os.makedirs(self.out_dir, exist_ok=True)
        for staged, final in self.staged:
            os.replace(staged, final)
        os.rmdir(self.tmp)


def write_samples_csv(path: str, chain: Chain):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "log_post", "size", "z", "gamma", "beta"])
        for i, s in enumerate(chain.samples):
            writer.writerow([
                i,
                fmt(s.log_post),
                s.size,
                "".join(str(int(b)) for b in s.z),
                ",".join(fmt(g) for g in s.gamma),
                "" if s.beta is None else ",".join(fmt(b) for b in s.beta),
            ])


def write_diagnostics_csv(path: str, chain: Chain):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "log_post", "size"])
        for i, s in enumerate(chain.samples):
            writer.writerow([i, fmt(s.log_post), s.size])


def write_curve_csv(path: str, grid, map_vals, bma_vals, lower, upper):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["grid_x", "map", "bma", "lower", "upper"])
        for row in zip(grid, map_vals, bma_vals, lower, upper):
            writer.writerow([fmt(v) for v in row])


def write_summary_json(path: str, payload: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_json_rounder(payload), fh, indent=2)
        fh.write("\n")


def build_priors(config: RunConfig, n: int) -> PriorConfig:
    default_lam = 1.0 if config.model_kind in ("changepoint", "gpd") else 3.0
    degree = 1 if config.model_kind in ("changepoint", "gpd") else config.degree
    return PriorConfig(
        c=config.c if config.c is not None else default_c(n),
        lam=config.lam if config.lam is not None else default_lam,
        max_knots=config.max_knots,
        degree=degree,
    )


def build_partition(config: RunConfig, data: Dataset):
    return default_intervals(
        data,
        config.interval_strategy,
        n_x=config.n_x,
        k_max=config.k_max,
        bounds=config.bounds,
    )


def sampler_config(config: RunConfig) -> SamplerConfig:
    return SamplerConfig(
        iterations=config.iterations,
        burnin=config.burnin,
        z_steps_per_sweep=config.z_steps,
        gamma_sweeps=config.gamma_sweeps,
        move_split=config.move_split,
        seed=config.seed,
    )


def _single_curve_bundle(chain: Chain, data: Dataset, priors: PriorConfig,
                         config: RunConfig, extra_summary: dict | None = None):
    """samples/curve/summary/diagnostics for the one-curve model kinds."""
    lo, hi = data.x_range
    grid = np.linspace(lo, hi, config.grid_size)
    map_vals, map_state, map_beta = map_estimate(chain, data, priors, grid=grid)
    bma_vals = bma_curve(chain, data, priors, grid=grid)
    lower, upper = pointwise_bands(chain, data, priors, grid, level=config.band_level)
    writer = BundleWriter(config.output_dir)
    write_samples_csv(writer.path("samples.csv"), chain)
    write_curve_csv(writer.path("curve.csv"), grid, map_vals, bma_vals, lower, upper)
    write_diagnostics_csv(writer.path("diagnostics.csv"), chain)
    summary = {
        "model": config.model_kind,
        "seed": config.seed,
        "map": {
            "log_post": chain.map_sample.log_post,
            "size": chain.map_sample.size,
            "z": "".join(str(int(b)) for b in chain.map_sample.z),
            "gamma": map_state.gamma,
            "beta": map_beta,
        },
        "acceptance": chain.meta.get("acceptance", {}),
        "config": {k: getattr(config, CONFIG_KEYS[k][0]) for k in CONFIG_KEYS},
        "occupancy": diagnostics(chain).occupancy,
    }
    if extra_summary:
        summary.update(extra_summary)
    write_summary_json(writer.path("summary.json"), summary)
    writer.commit()
    return summary


def _load_dataset(path: str, config: RunConfig) -> Dataset:
    if config.model_kind == "changepoint":
        cols = read_columns(path, ("d", "r"))
        if np.any(cols["d"] + config.tombs_delta <= 0) or np.any(cols["r"] <= 0):
            raise ConfigError("tombs data needs d + delta > 0 and r > 0")
        return Dataset(np.log(cols["d"] + config.tombs_delta), np.log(cols["r"]))
    cols = read_columns(path, ("x", "y"))
    return Dataset(cols["x"], cols["y"])


def run_fit(config: RunConfig, data_path: str) -> dict:
    """fit subcommand: route to the right engine and emit the bundle."""
    if config.model_kind == "gpd":
        return run_gpd(config, data_path)
    data = _load_dataset(data_path, config)
    priors = build_priors(config, data.n)
    partition = build_partition(config, data)
    scfg = sampler_config(config)
    if config.model_kind == "poisson":
        if np.any(data.y < 0) or np.any(data.y != np.round(data.y)):
            raise ConfigError("poisson responses must be nonnegative integers")
        builder = DesignBuilder("truncated_power", priors.degree, x_range=data.x_range)
        model = PoissonLogLinkModel(data, builder)
        scales = ProposalScales(config.delta_z, config.delta_beta, config.kappa)
        chain = run_glm_chain(partition, model, priors, scfg, scales, bma_points=data.x)
        return _single_curve_bundle(chain, data, priors, config)
    kind = "changepoint" if config.model_kind == "changepoint" else config.basis
    builder = DesignBuilder(kind, priors.degree, x_range=data.x_range)
    chain = run_gaussian_chain(data, partition, priors, scfg, builder=builder, bma_points=data.x)
    extra = None
    if config.model_kind == "changepoint":
        extra = {"changepoint_report": changepoint_report(chain, data, priors)}
    return _single_curve_bundle(chain, data, priors, config, extra_summary=extra)


def changepoint_report(chain: Chain, data: Dataset, priors: PriorConfig) -> dict:
    """MAP change-point locations and back-transformed per-segment coefficients."""
    _, map_state, map_beta = map_estimate(chain, data, priors, grid=data.x)
    gamma_active = np.sort(map_state.active_gammas())
    alpha0, alpha1 = float(map_beta[0]), float(map_beta[1])
    eta = map_beta[2:]
    order = np.argsort(map_state.active_gammas())
    segments = tombs_coefficients(alpha0, alpha1, np.asarray(eta)[order], gamma_active)
    return {
        "n_changepoints": int(map_state.size),
        "locations": gamma_active,
        "segments": [{"log_a": a, "b": b} for a, b in segments],
    }


def run_gpd(config: RunConfig, data_path: str) -> dict:
    cols = read_columns(data_path, ("day", "y"))
    days, y = cols["day"], cols["y"]
    if np.any(y <= 0):
        raise ConfigError("gpd exceedances must be positive")
    if np.any((days < 1) | (days > 366)):
        raise ConfigError("gpd days must lie in [1, 366]")
    gpd_cfg = GpdConfig(config.gpd_threshold, config.gpd_zeta_u, config.gpd_n_y)
    model = GpdSeasonalModel(days, y, period=gpd_cfg.period)
    n = y.size
    priors = PriorConfig(
        c=config.c if config.c is not None else float(n),
        lam=config.lam if config.lam is not None else 1.0,
        max_knots=config.max_knots,
        degree=1,
    )
    if config.bounds is not None:
        bounds = config.bounds
    else:
        bounds = tuple(np.linspace(1.0, 366.0, config.k_max + 1))
    partition = default_intervals(Dataset(days, y), "explicit", bounds=bounds)
    scfg = sampler_config(config)
    scales = ProposalScales(config.delta_z, config.delta_beta, config.kappa)
    chain = run_glm_chain(partition, model, priors, scfg, scales, bma_points=days)
    return gpd_report(chain, model, gpd_cfg, config, Dataset(days, y), priors)


def gpd_report(chain: Chain, model: GpdSeasonalModel, gpd_cfg: GpdConfig,
               config: RunConfig, data: Dataset, priors: PriorConfig) -> dict:
    """Per-day posterior curves for scale, shape and the return level."""
    day_grid = np.arange(1.0, 367.0)
    sigma_curves = curve_samples(chain, data, priors, day_grid, block="sigma")
    xi_curves = curve_samples(chain, data, priors, day_grid, block="xi")
    rl_curves = np.full_like(sigma_curves, np.nan)
    valid = sigma_curves > 0
    with np.errstate(invalid="ignore"):
        rl_curves[valid] = return_level(sigma_curves[valid], xi_curves[valid],
                                        gpd_cfg, years=config.return_years)
    alpha = (1.0 - config.band_level) / 2.0

    def stats(curves):
        return (np.nanmean(curves, axis=0),
                np.nanquantile(curves, alpha, axis=0),
                np.nanquantile(curves, 1.0 - alpha, axis=0))

    s_mean, s_lo, s_hi = stats(sigma_curves)
    x_mean, x_lo, x_hi = stats(xi_curves)
    r_mean, r_lo, r_hi = stats(rl_curves)
    nonpositive_days = day_grid[s_mean <= 0].tolist()

    writer = BundleWriter(config.output_dir)
    write_samples_csv(writer.path("samples.csv"), chain)
    write_diagnostics_csv(writer.path("diagnostics.csv"), chain)
    with open(writer.path("gpd_curve.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["day", "sigma_mean", "sigma_lower", "sigma_upper",
                    "xi_mean", "xi_lower", "xi_upper",
                    "rl_mean", "rl_lower", "rl_upper"])
        for i, day in enumerate(day_grid):
            w.writerow([fmt(day)] + [fmt(v) for v in
                                     (s_mean[i], s_lo[i], s_hi[i],
                                      x_mean[i], x_lo[i], x_hi[i],
                                      r_mean[i], r_lo[i], r_hi[i])])
    summary = {
        "model": "gpd",
        "seed": config.seed,
        "map": {
            "log_post": chain.map_sample.log_post,
            "size": chain.map_sample.size,
            "z": "".join(str(int(b)) for b in chain.map_sample.z),
        },
        "acceptance": chain.meta.get("acceptance", {}),
        "threshold": gpd_cfg.threshold,
        "zeta_u": gpd_cfg.zeta_u,
        "return_years": config.return_years,
        "nonpositive_sigma_days": nonpositive_days,
        "flag_nonpositive_sigma": bool(nonpositive_days),
    }
    write_summary_json(writer.path("summary.json"), summary)
    writer.commit()
    return summary


def run_simulate(config: RunConfig, example_id: str, n: int, out_path: str) -> dict:
    if example_id not in EXAMPLE_IDS:
        raise ConfigError(f"unknown example id '{example_id}'")
    data, f_true = simulate_example(example_id, n, seed=config.seed)
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "f_true"])
        for xi, yi, fi in zip(data.x, data.y, f_true(data.x)):
            writer.writerow([fmt(xi), fmt(yi), fmt(fi)])
    return {"example": example_id, "n": n, "path": out_path}


def run_replicate_study(config: RunConfig, example_id: str, n: int, replicates: int) -> dict:
    if example_id not in EXAMPLE_IDS:
        raise ConfigError(f"unknown example id '{example_id}'")
    if example_id == "poisson":
        settings = StudySettings.table_poisson(degree=config.degree, n=n)
    else:
        settings = StudySettings.table_curve(example_id, n)
        settings.iterations = config.iterations
        settings.burnin = config.burnin
        settings.z_steps = config.z_steps
        if config.basis != "truncated_power":
            settings.basis = config.basis
    if config.c is not None:
        settings.c = config.c
    if config.lam is not None:
        settings.lam = config.lam
    result = replicate_study(settings, replicates=replicates, base_seed=config.seed)
    summary = result.summary()
    os.makedirs(config.output_dir, exist_ok=True)
    path = os.path.join(config.output_dir, f"study_{example_id}_n{n}.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_json_rounder({**summary, "map_mse": result.map_mse,
                                 "bma_mse": result.bma_mse}), fh, indent=2)
        fh.write("\n")
    return summary


def run_tombs(config: RunConfig, data_path: str) -> dict:
    """Change-point analysis with the benchmark priors for the tomb data."""
    config = replace(
        config,
        model_kind="changepoint",
        interval_strategy="explicit",
        bounds=config.bounds if config.bounds is not None else (0.15, 0.8, 1.2, 1.6),
        c=config.c if config.c is not None else 500.0,
        max_knots=min(config.max_knots, 3),
    )
    return run_fit(config, data_path)


# command-specific defaults (overridable via config file and flags)
TOMBS_BASE = RunConfig(model_kind="changepoint", iterations=5000, burnin=1000,
                       z_steps=20, max_knots=3)
GPD_BASE = RunConfig(model_kind="gpd", iterations=5000, burnin=1000,
                     z_steps=1, gamma_sweeps=10, kappa=10,
                     delta_z=1.0, delta_beta=0.1, k_max=10)


def _add_common_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="config file of dotted key = value lines")
    p.add_argument("--model", dest="model_kind", choices=MODEL_KINDS)
    p.add_argument("--degree", type=int)
    p.add_argument("--basis", choices=("truncated_power", "bspline"))
    p.add_argument("--intervals", dest="interval_strategy",
                   choices=("every_nx", "equal_count", "explicit"))
    p.add_argument("--nx", dest="n_x", type=int)
    p.add_argument("--kmax", dest="k_max", type=int)
    p.add_argument("--bounds", type=_parse_bounds)
    p.add_argument("--c", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--max-knots", dest="max_knots", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--burnin", type=int)
    p.add_argument("--z-steps", dest="z_steps", type=int)
    p.add_argument("--gamma-sweeps", dest="gamma_sweeps", type=int)
    p.add_argument("--kappa", type=int)
    p.add_argument("--delta-z", dest="delta_z", type=float)
    p.add_argument("--delta-beta", dest="delta_beta", type=float)
    p.add_argument("--move-split", dest="move_split", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--estimator", choices=("map", "bma", "both"))
    p.add_argument("--grid-size", dest="grid_size", type=int)
    p.add_argument("--out", dest="output_dir")
    p.add_argument("--band-level", dest="band_level", type=float)
    p.add_argument("--tombs-delta", dest="tombs_delta", type=float)
    p.add_argument("--gpd-threshold", dest="gpd_threshold", type=float)
    p.add_argument("--gpd-zeta-u", dest="gpd_zeta_u", type=float)
    p.add_argument("--gpd-n-y", dest="gpd_n_y", type=float)
    p.add_argument("--return-years", dest="return_years", type=float)


def build_config(args: argparse.Namespace, base: RunConfig | None = None) -> RunConfig:
    config = base if base is not None else RunConfig()
    if getattr(args, "config", None):
        config = load_config_file(args.config, config)
    overrides = {}
    for f in fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            overrides[f.name] = value
    config = replace(config, **overrides)
    return validate_config(config)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="freeknot",
                                     description="Bayesian free-knot spline regression")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a model to a CSV dataset")
    p_fit.add_argument("data", help="CSV with columns x,y (d,r for tombs; day,y for gpd)")
    _add_common_flags(p_fit)

    p_sim = sub.add_parser("simulate", help="write a simulated benchmark dataset")
    p_sim.add_argument("--example", required=True, choices=EXAMPLE_IDS)
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--data-out", required=True)
    _add_common_flags(p_sim)

    p_rep = sub.add_parser("replicate-study", help="repeat simulate/fit/score rounds")
    p_rep.add_argument("--example", required=True, choices=EXAMPLE_IDS)
    p_rep.add_argument("--n", type=int, required=True)
    p_rep.add_argument("--replicates", type=int, default=50)
    _add_common_flags(p_rep)

    p_tombs = sub.add_parser("tombs", help="change-point analysis of (d, r) tomb data")
    p_tombs.add_argument("data")
    _add_common_flags(p_tombs)

    p_gpd = sub.add_parser("gpd", help="seasonal GPD analysis of (day, y) exceedances")
    p_gpd.add_argument("data")
    _add_common_flags(p_gpd)

    args = parser.parse_args(argv)
    bases = {"tombs": TOMBS_BASE, "gpd": GPD_BASE}
    try:
        config = build_config(args, base=bases.get(args.command))
        if args.command == "fit":
            summary = run_fit(config, args.data)
        elif args.command == "simulate":
            summary = run_simulate(config, args.example, args.n, args.data_out)
        elif args.command == "replicate-study":
            summary = run_replicate_study(config, args.example, args.n, args.replicates)
        elif args.command == "tombs":
            summary = run_tombs(config, args.data)
        elif args.command == "gpd":
            config = replace(config, model_kind="gpd")
            summary = run_fit(config, args.data)
        else:  # pragma: no cover
            raise ConfigError(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(_json_rounder(summary), indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
