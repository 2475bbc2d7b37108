"""Command line interface: discoflux solve|steady|zrp|couple|audit|hydro.

Every subcommand reads a flat key=value config (see hydro_harness for the key
list); --seed, --out and --threads override the config.  Exit codes: 0 for
success, 2 when a requested acceptance-style check fails, 1 on errors.
All numeric CSV output uses '.' decimals with 17 significant digits.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .entropy_audit import alpha_library, residual_report, test_function_library
from .errors import DiscofluxError
from .flux_model import MollifierKernel
from .fv_solver import Grid1D, solve, solve_series
from .hydro_harness import (
    ExperimentConfig,
    build_model,
    build_profile,
    emit_report,
    epsilon_cauchy_ok,
    hydro_decrease_ok,
    load_config,
    run_epsilon_study,
    run_hydro,
    _fmt,
)
from .rng import stream
from .steady_states import steady_at
from .zrp_core import (
    JumpKernel,
    block_average_profile,
    run_until,
    sample_product_measure,
)
from .coupling import (
    coupled_from_profiles,
    microscopic_entropy,
    record_coupled_trajectory,
    uncoupled_pairs,
)


def _write_csv(path: Path, header: str, rows) -> None:
    lines = [header]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    print(f"wrote {path}")


def _cmd_solve(cfg: ExperimentConfig, out: Path) -> int:
    model = build_model(cfg)
    profile = build_profile(cfg, model)
    grid = Grid1D(cfg.cells)
    kernel = MollifierKernel(cfg.epsilon)
    for t in cfg.times:
        sol = solve(model.flux, kernel, profile, float(t), grid)
        _write_csv(out / f"solve_t{t:g}.csv", "x,rho",
                   zip(grid.centers, sol.values))
    return 0


def _cmd_steady(cfg: ExperimentConfig, out: Path) -> int:
    model = build_model(cfg)
    grid = Grid1D(cfg.cells)
    for alpha in cfg.alphas:
        m_plus = steady_at(model.flux, float(alpha), grid.centers, "plus")
        m_minus = (m_plus if model.closure.increasing
                   else steady_at(model.flux, float(alpha), grid.centers, "minus"))
        _write_csv(out / f"steady_alpha{alpha:g}.csv",
                   "x,m_alpha_plus,m_alpha_minus",
                   zip(grid.centers, m_plus, m_minus))
    return 0


def _cmd_zrp(cfg: ExperimentConfig, out: Path) -> int:
    model = build_model(cfg)
    n = cfg.n_sites
    eps = float(n) ** (-cfg.sigma)
    model_n = model.mollified(MollifierKernel(eps))
    profile = build_profile(cfg, model)
    rng = stream(cfg.seed, 1)
    particles = sample_product_measure(model_n, profile, n, rng)
    kernel = JumpKernel.totally_asymmetric()
    sites = np.arange(n)
    xs = sites / n
    for t in sorted(cfg.times):
        run_until(particles, model_n, kernel, float(t), rng,
                  max_events=cfg.max_events)
        _write_csv(out / f"zrp_t{t:g}.csv", "u,eta",
                   zip(sites, particles.occupancies))
        blocks = block_average_profile(particles, cfg.l_block)
        _write_csv(out / f"zrp_blocks_t{t:g}.csv", "x,eta_l", zip(xs, blocks))
    return 0


def _cmd_couple(cfg: ExperimentConfig, out: Path) -> int:
    model = build_model(cfg)
    n = cfg.n_sites
    model_n = model.mollified(MollifierKernel(float(n) ** (-cfg.sigma)))
    profile = build_profile(cfg, model)
    kernel = JumpKernel.totally_asymmetric()
    js = test_function_library(cfg.t_end)
    j_mid = js[len(js) // 2]
    trace_rows = []
    entropy_rows = []
    for rep in range(cfg.replicas):
        rng = stream(cfg.seed, 2, rep)
        cc = coupled_from_profiles(model_n, kernel, profile, cfg.alpha, n, rng)
        traj = record_coupled_trajectory(
            cc, cfg.t_end, rng,
            snapshots_per_unit_time=max(2, round(cfg.checkpoints / cfg.t_end)),
            max_events=cfg.max_events)
        for k, t in enumerate(traj.times):
            disc = float(np.abs(traj.eta_states[k] - traj.xi_states[k]).sum()) / n
            cc_k = cc.copy()
            cc_k.eta.occupancies[:] = traj.eta_states[k]
            cc_k.xi.occupancies[:] = traj.xi_states[k]
            trace_rows.append((rep, float(t), disc, uncoupled_pairs(cc_k)))
        entropy_rows.append((rep, j_mid.id,
                             microscopic_entropy(traj, j_mid, cfg.l_block)))
    _write_csv(out / "couple_trace.csv", "replica,t,discrepancy,uncoupled_pairs",
               trace_rows)
    _write_csv(out / "couple_entropy.csv", "replica,j_id,value", entropy_rows)
    return 0


def _cmd_audit(cfg: ExperimentConfig, out: Path) -> int:
    model = build_model(cfg)
    profile = build_profile(cfg, model)
    grid = Grid1D(cfg.cells)
    kernel = MollifierKernel(cfg.epsilon)
    model_eps = model.flux.mollified(kernel)
    series = solve_series(model.flux, kernel, profile, cfg.t_end, grid,
                          n_snapshots=cfg.snapshots)
    alphas = alpha_library(model_eps, profile)
    js = test_function_library(cfg.t_end)
    report = residual_report(series, model_eps, alphas, js)
    _write_csv(out / "audit.csv", "alpha,branch,j_id,residual", report.rows)
    if cfg.assert_decreasing and report.min_residual() < -0.01:
        print(f"audit check failed: min residual {report.min_residual()!r}",
              file=sys.stderr)
        return 2
    return 0


def _cmd_hydro(cfg: ExperimentConfig, out: Path) -> int:
    if cfg.mode == "epsilon":
        report = run_epsilon_study(cfg)
        emit_report(report, out)
        if cfg.assert_decreasing and not epsilon_cauchy_ok(report):
            print("epsilon study failed the Cauchy-decrease check", file=sys.stderr)
            return 2
        return 0
    report = run_hydro(cfg)
    emit_report(report, out)
    if cfg.assert_decreasing and not hydro_decrease_ok(report):
        print("hydro ladder failed the decrease check", file=sys.stderr)
        return 2
    return 0


_COMMANDS = {
    "solve": _cmd_solve,
    "steady": _cmd_steady,
    "zrp": _cmd_zrp,
    "couple": _cmd_couple,
    "audit": _cmd_audit,
    "hydro": _cmd_hydro,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="discoflux",
        description="Finite-volume solver, zero range process simulator and "
                    "hydrodynamic-limit harness for conservation laws with "
                    "discontinuous fluxes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("solve", "finite-volume solve; CSV (x, rho) per configured time"),
        ("steady", "steady-state profiles; CSV (x, m_alpha_plus, m_alpha_minus)"),
        ("zrp", "single particle trajectory; occupancy and block-average CSVs"),
        ("couple", "coupled-pair traces and microscopic entropy values"),
        ("audit", "adapted entropy residual report over the default libraries"),
        ("hydro", "hydrodynamic N-ladder (mode=hydro) or epsilon study (mode=epsilon)"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="flat key=value config file")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None, help="worker threads")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.out is not None:
        overrides["out_dir"] = args.out
    try:
        cfg = load_config(args.config, overrides)
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        code = _COMMANDS[args.command](cfg, out)
    except DiscofluxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1
    return code


if __name__ == "__main__":
    sys.exit(main())
