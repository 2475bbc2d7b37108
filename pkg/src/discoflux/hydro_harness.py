"""Hydrodynamic-limit experiments: N-ladders of particle ensembles against a
PDE reference, the epsilon-Cauchy study, and the report/config plumbing.

Configuration files are flat ``key = value`` text with typed keys; unknown
keys are rejected so long runs cannot be silently misconfigured.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .entropy_audit import YoungMeasureEstimate
from .errors import ConfigError
from .flux_model import MollifierKernel, step_speed
from .fv_solver import Grid1D, solve
from .rng import stream
from .steady_states import steady_at
from .zrp_core import (
    JumpKernel,
    ZrpModel,
    block_average_profile,
    run_until_with_stats,
    sample_product_measure,
    zrp_model,
)

__all__ = [
    "ExperimentConfig",
    "parse_config_text",
    "load_config",
    "ConvergenceReport",
    "HydroRow",
    "EpsilonReport",
    "run_hydro",
    "run_epsilon_study",
    "emit_report",
    "equilibrium_fluctuation_scale",
    "riemann_profile",
]


# ---------------------------------------------------------------------------
# Configuration


def _parse_bool(s: str) -> bool:
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _parse_floats(s: str) -> tuple:
    return tuple(float(v) for v in s.split(",") if v.strip())


def _parse_ints(s: str) -> tuple:
    return tuple(int(v) for v in s.split(",") if v.strip())


@dataclass
class ExperimentConfig:
    """Typed experiment knobs; see ``discoflux --help`` for the key list."""

    mode: str = "hydro"                      # hydro | epsilon
    seed: int = 12345
    threads: int = 1
    out_dir: str = "."
    # model
    lambda_values: tuple = (2.0, 1.0)
    lambda_breaks: tuple = (0.0, 0.5)
    rate: str = "indicator"
    sigma: float = 0.5
    rho_max: float = 50.0
    # initial profile
    profile: str = "riemann"                 # riemann | constant | steady
    rho_left: float = 1.0 / 3.0
    rho_right: float = 0.4
    x_jump: float = 0.5
    rho_const: float = 0.5
    alpha: float = 0.5
    # hydro experiment
    n_ladder: tuple = (250, 500, 1000, 2000)
    replicas: int = 50
    l_block: int = 10
    l_mode: str = "fixed"                    # fixed | n_quarter
    t_end: float = 0.4
    ref_cells: int = 4096
    compare_bins: int = 20
    max_events: int = 10 ** 9
    young_bins: int = 20
    keep_configs: bool = True
    assert_decreasing: bool = False
    # epsilon study
    epsilon0: float = 1.0 / 16.0
    levels: int = 4
    # generic solver/audit knobs (used by the CLI subcommands)
    cells: int = 512
    epsilon: float = 1.0 / 32.0
    times: tuple = (0.2,)
    alphas: tuple = (0.25, 0.5)
    n_sites: int = 512
    snapshots: int = 64
    checkpoints: int = 10


_PARSERS = {
    "mode": str, "seed": int, "threads": int, "out_dir": str,
    "lambda_values": _parse_floats, "lambda_breaks": _parse_floats,
    "rate": str, "sigma": float, "rho_max": float,
    "profile": str, "rho_left": float, "rho_right": float, "x_jump": float,
    "rho_const": float, "alpha": float,
    "n_ladder": _parse_ints, "replicas": int, "l_block": int, "l_mode": str,
    "t_end": float, "ref_cells": int, "compare_bins": int, "max_events": int,
    "young_bins": int,
    "keep_configs": _parse_bool, "assert_decreasing": _parse_bool,
    "epsilon0": float, "levels": int,
    "cells": int, "epsilon": float, "times": _parse_floats,
    "alphas": _parse_floats, "n_sites": int, "snapshots": int, "checkpoints": int,
}


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment; unknown keys error."""
    out = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"line {ln}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {ln}: duplicate key {key!r}")
        try:
            out[key] = _PARSERS[key](value)
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(f"line {ln}: bad value for {key!r}: {exc}") from exc
    return out


def load_config(path, overrides: dict = None) -> ExperimentConfig:
    mapping = parse_config_text(Path(path).read_text())
    if overrides:
        mapping.update(overrides)
    cfg = ExperimentConfig(**mapping)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.mode not in ("hydro", "epsilon"):
        raise ConfigError(f"mode must be hydro or epsilon, got {cfg.mode!r}")
    if cfg.rate not in ("indicator", "identity"):
        raise ConfigError(f"rate must be indicator or identity, got {cfg.rate!r}")
    if cfg.profile not in ("riemann", "constant", "steady"):
        raise ConfigError(f"unknown profile {cfg.profile!r}")
    if list(cfg.n_ladder) != sorted(set(cfg.n_ladder)):
        raise ConfigError("n_ladder must be strictly increasing")
    if cfg.replicas < 2:
        raise ConfigError("replicas must be >= 2")
    if cfg.l_mode not in ("fixed", "n_quarter"):
        raise ConfigError(f"l_mode must be fixed or n_quarter, got {cfg.l_mode!r}")
    if not 0.0 < cfg.sigma < 1.0:
        raise ConfigError("sigma must lie in (0, 1)")


# ---------------------------------------------------------------------------
# Model and profile builders


def build_model(cfg: ExperimentConfig) -> ZrpModel:
    speed = step_speed(cfg.lambda_values, cfg.lambda_breaks)
    return zrp_model(speed, cfg.rate, rho_max=cfg.rho_max)


def riemann_profile(rho_left: float, rho_right: float, x_jump: float):
    def profile(x):
        x = np.asarray(x, dtype=float) % 1.0
        return np.where(x < x_jump, rho_left, rho_right)

    return profile


def build_profile(cfg: ExperimentConfig, model: ZrpModel):
    if cfg.profile == "riemann":
        return riemann_profile(cfg.rho_left, cfg.rho_right, cfg.x_jump)
    if cfg.profile == "constant":
        return lambda x: np.full_like(np.asarray(x, dtype=float), cfg.rho_const)
    # steady profile of the raw model at the configured alpha
    def profile(x):
        return steady_at(model.flux, cfg.alpha, x)

    return profile


def _block_radius(cfg: ExperimentConfig, n: int) -> int:
    if cfg.l_mode == "n_quarter":
        return max(1, int(n ** 0.25))
    return cfg.l_block


# ---------------------------------------------------------------------------
# Reports


@dataclass
class HydroRow:
    run_id: str
    n_sites: int
    epsilon: float
    l: int
    replicas: int
    t: float
    l1_mean: float
    l1_std: float
    events_total: int
    wall_seconds: float


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)
    reference: dict = field(default_factory=dict)
    ensembles: dict = field(default_factory=dict)   # N -> list[Configuration]

    def sorted_rows(self) -> list:
        return sorted(self.rows, key=lambda r: r.n_sites)


@dataclass
class EpsilonReport:
    rows: list = field(default_factory=list)        # (epsilon, cells, l1_diff)
    meta: dict = field(default_factory=dict)

    def diffs(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows])


# ---------------------------------------------------------------------------
# Hydro experiment


def _reference_solution(cfg: ExperimentConfig, model: ZrpModel, profile):
    grid = Grid1D(cfg.ref_cells)
    kernel = MollifierKernel(8.0 * grid.dx)
    sol = solve(model.flux, kernel, profile, cfg.t_end, grid)
    coarse_grid = Grid1D(cfg.ref_cells // 2)
    coarse = solve(model.flux, MollifierKernel(8.0 * coarse_grid.dx), profile,
                   cfg.t_end, coarse_grid)
    richardson = float(np.mean(np.abs(sol.values - np.repeat(coarse.values, 2))))
    meta = {
        "type": "fine-grid",
        "cells": cfg.ref_cells,
        "epsilon": kernel.epsilon,
        "richardson_l1": richardson,
    }
    return grid, sol.values, meta


def _bin_means(values: np.ndarray, n_bins: int) -> np.ndarray:
    """Averages of a periodic field over n_bins equal macro cells."""
    n = values.size
    bins = (np.arange(n) * n_bins) // n
    sums = np.bincount(bins, weights=values, minlength=n_bins)
    counts = np.bincount(bins, minlength=n_bins)
    return sums / np.maximum(counts, 1)


def _one_replica(args):
    """One ensemble member: sample, run, block-average, binned L1 vs reference.

    Both the particle field and the reference are averaged over the same
    macro bins before the distance, so the comparison has no N-independent
    fluctuation floor (the l-window noise would otherwise dominate).
    """
    (model_n, kernel, profile, n, t_end, l, seed, replica, max_events,
     ref_binned, n_bins) = args
    rng = stream(seed, n, replica)
    cfg_particles = sample_product_measure(model_n, profile, n, rng)
    _, stats = run_until_with_stats(cfg_particles, model_n, kernel, t_end, rng,
                                    max_events=max_events)
    blocks = block_average_profile(cfg_particles, l)
    l1 = float(np.mean(np.abs(_bin_means(blocks, n_bins) - ref_binned)))
    return l1, stats.events, cfg_particles


def run_hydro(cfg: ExperimentConfig) -> ConvergenceReport:
    """N-ladder of ZRP ensembles vs the fine-grid entropy-solution reference."""
    model = build_model(cfg)
    profile = build_profile(cfg, model)
    ref_grid, ref_values, ref_meta = _reference_solution(cfg, model, profile)
    ref_binned = _bin_means(ref_values, cfg.compare_bins)
    ref_meta["compare_bins"] = cfg.compare_bins
    kernel_jump = JumpKernel.totally_asymmetric()
    report = ConvergenceReport(reference=ref_meta)
    for n in cfg.n_ladder:
        eps_n = float(n) ** (-cfg.sigma)
        model_n = model.mollified(MollifierKernel(eps_n))
        l = _block_radius(cfg, n)
        t0 = time.perf_counter()
        tasks = [
            (model_n, kernel_jump, profile, n, cfg.t_end, l, cfg.seed, rep,
             cfg.max_events, ref_binned, cfg.compare_bins)
            for rep in range(cfg.replicas)
        ]
        if cfg.threads > 1:
            with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                results = list(pool.map(_one_replica, tasks))
        else:
            results = [_one_replica(t) for t in tasks]
        wall = time.perf_counter() - t0
        l1s = np.array([r[0] for r in results])
        events = int(sum(r[1] for r in results))
        if cfg.keep_configs:
            report.ensembles[n] = [r[2] for r in results]
        report.rows.append(HydroRow(
            run_id=f"N{n}", n_sites=n, epsilon=eps_n, l=l, replicas=cfg.replicas,
            t=cfg.t_end, l1_mean=float(l1s.mean()),
            l1_std=float(l1s.std(ddof=1)), events_total=events,
            wall_seconds=wall,
        ))
    report.rows.sort(key=lambda r: r.n_sites)
    return report


def hydro_decrease_ok(report: ConvergenceReport, z: float = 1.96) -> bool:
    """Strict decrease of l1_mean along the ladder modulo z-sigma overlap."""
    rows = report.sorted_rows()
    for a, b in zip(rows, rows[1:]):
        se = math.hypot(a.l1_std / math.sqrt(a.replicas), b.l1_std / math.sqrt(b.replicas))
        if not b.l1_mean < a.l1_mean + z * se:
            return False
    return True


def young_estimates(report: ConvergenceReport, cfg: ExperimentConfig) -> dict:
    """Young-measure estimates per ladder point from the kept ensembles."""
    out = {}
    for n, configs in sorted(report.ensembles.items()):
        out[n] = YoungMeasureEstimate.from_ensemble(
            configs, _block_radius(cfg, n), n_bins=cfg.young_bins)
    return out


def equilibrium_fluctuation_scale(model: ZrpModel, alpha: float, n: int, l: int,
                                  replicas: int, seed: int,
                                  n_bins: int = 20) -> float:
    """Mean binned-L1 distance of equilibrium samples from the steady profile.

    Pure product-measure sampling (no dynamics), measured with the same binned
    metric the hydro report uses; the scale against which stationary-run
    errors are judged.
    """
    from .zrp_core import sample_equilibrium

    xs = np.arange(n, dtype=float) / n
    target = _bin_means(steady_at(model.flux, alpha, xs), n_bins)
    vals = []
    for rep in range(replicas):
        rng = stream(seed, 7701, n, rep)
        c = sample_equilibrium(model, alpha, n, rng)
        blocks = _bin_means(block_average_profile(c, l), n_bins)
        vals.append(float(np.mean(np.abs(blocks - target))))
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# Epsilon study


def run_epsilon_study(cfg: ExperimentConfig) -> EpsilonReport:
    """Cauchy differences ||rho^eps - rho^{eps/2}||_L1 on grids with dx = eps/8."""
    model = build_model(cfg)
    profile = build_profile(cfg, model)
    epsilons = [cfg.epsilon0 * 2.0 ** (-k) for k in range(cfg.levels)]
    solutions = []
    for eps in epsilons:
        n = round(8.0 / eps)
        grid = Grid1D(n)
        sol = solve(model.flux, MollifierKernel(eps), profile, cfg.t_end, grid)
        solutions.append((eps, n, sol.values))
    report = EpsilonReport(meta={"t_end": cfg.t_end, "epsilon0": cfg.epsilon0,
                                 "levels": cfg.levels})
    for (eps, n, coarse), (_, n2, fine) in zip(solutions, solutions[1:]):
        factor = n2 // n
        diff = float(np.mean(np.abs(np.repeat(coarse, factor) - fine)))
        report.rows.append((eps, n, diff))
    return report


def epsilon_cauchy_ok(report: EpsilonReport, ratio: float = 0.9) -> bool:
    d = report.diffs()
    return bool(np.all(d[1:] <= ratio * d[:-1]))


# ---------------------------------------------------------------------------
# Emission


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def emit_report(report, out_dir, prefix: str = None) -> list:
    """Write the CSV and plot-data files for a report; idempotent and
    byte-deterministic for a given report object."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    if isinstance(report, ConvergenceReport):
        name = prefix or "convergence"
        csv_path = out / f"{name}.csv"
        header = "run_id,N,epsilon,l,M,t,l1_mean,l1_std,events_total,wall_seconds"
        lines = [header]
        for r in report.sorted_rows():
            lines.append(",".join(_fmt(v) for v in (
                r.run_id, r.n_sites, r.epsilon, r.l, r.replicas, r.t,
                r.l1_mean, r.l1_std, r.events_total, r.wall_seconds)))
        csv_path.write_text("\n".join(lines) + "\n")
        paths.append(csv_path)
        plot_path = out / f"{name}_plot.dat"
        plot_lines = [f"{r.n_sites} {_fmt(r.l1_mean)}" for r in report.sorted_rows()]
        plot_path.write_text("\n".join(plot_lines) + "\n")
        paths.append(plot_path)
    elif isinstance(report, EpsilonReport):
        name = prefix or "epsilon"
        csv_path = out / f"{name}.csv"
        lines = ["epsilon,cells,l1_diff_to_half"]
        for eps, n, diff in report.rows:
            lines.append(",".join(_fmt(v) for v in (eps, n, diff)))
        csv_path.write_text("\n".join(lines) + "\n")
        paths.append(csv_path)
        plot_path = out / f"{name}_plot.dat"
        plot_path.write_text(
            "\n".join(f"{_fmt(eps)} {_fmt(diff)}" for eps, _, diff in report.rows) + "\n")
        paths.append(plot_path)
    else:
        raise TypeError(f"unknown report type {type(report)!r}")
    return paths
