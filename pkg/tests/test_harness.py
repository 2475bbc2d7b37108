import numpy as np
import pytest

from discoflux import (
    ConfigError,
    ConvergenceReport,
    EpsilonReport,
    ExperimentConfig,
    emit_report,
    epsilon_cauchy_ok,
    equilibrium_fluctuation_scale,
    hydro_decrease_ok,
    load_config,
    run_epsilon_study,
    run_hydro,
    young_estimates,
    zrp_model,
    step_speed,
    MollifierKernel,
)
from discoflux.cli import main as cli_main
from discoflux.hydro_harness import HydroRow, _bin_means, parse_config_text


# ---------------------------------------------------------------------------
# Config parsing


def test_parse_config_text_basics():
    text = """
    # comment
    mode = epsilon
    seed = 99          # trailing comment
    lambda_values = 2, 1
    t_end = 0.25
    keep_configs = false
    """
    out = parse_config_text(text)
    assert out["mode"] == "epsilon"
    assert out["seed"] == 99
    assert out["lambda_values"] == (2.0, 1.0)
    assert out["t_end"] == 0.25
    assert out["keep_configs"] is False


@pytest.mark.parametrize("bad", [
    "unknown_key = 1",
    "seed 99",
    "seed = not_a_number",
    "seed = 1\nseed = 2",
    "keep_configs = maybe",
])
def test_parse_config_rejects(bad):
    with pytest.raises(ConfigError):
        parse_config_text(bad)


def test_load_config_with_overrides(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("mode = hydro\nseed = 4\nreplicas = 3\n")
    cfg = load_config(path, overrides={"seed": 11})
    assert cfg.seed == 11
    assert cfg.replicas == 3


@pytest.mark.parametrize("text", [
    "mode = banana",
    "rate = misanthrope",
    "profile = wedge",
    "n_ladder = 500, 250",
    "replicas = 1",
    "l_mode = adaptive",
    "sigma = 1.5",
])
def test_config_validation(tmp_path, text):
    path = tmp_path / "exp.cfg"
    path.write_text(text + "\n")
    with pytest.raises(ConfigError):
        load_config(path)


# ---------------------------------------------------------------------------
# Helpers and reports


def test_bin_means_grouping():
    vals = np.arange(10.0)
    out = _bin_means(vals, 5)
    assert np.allclose(out, [0.5, 2.5, 4.5, 6.5, 8.5])
    ragged = _bin_means(np.arange(7.0), 3)   # groups of 3, 2, 2
    assert np.allclose(ragged, [1.0, 3.5, 5.5])


def _dummy_row(n, l1):
    return HydroRow(run_id=f"N{n}", n_sites=n, epsilon=n ** -0.5, l=10,
                    replicas=50, t=0.4, l1_mean=l1, l1_std=0.01,
                    events_total=1000, wall_seconds=0.5)


def test_hydro_decrease_ok_logic():
    good = ConvergenceReport(rows=[_dummy_row(250, 0.12), _dummy_row(500, 0.08),
                                   _dummy_row(1000, 0.05)])
    assert hydro_decrease_ok(good)
    bad = ConvergenceReport(rows=[_dummy_row(250, 0.05), _dummy_row(500, 0.2)])
    assert not hydro_decrease_ok(bad)


def test_epsilon_cauchy_ok_logic():
    assert epsilon_cauchy_ok(EpsilonReport(rows=[(0.1, 80, 0.04), (0.05, 160, 0.02)]))
    assert not epsilon_cauchy_ok(EpsilonReport(rows=[(0.1, 80, 0.02), (0.05, 160, 0.0199)]))


def test_emit_report_deterministic(tmp_path):
    report = ConvergenceReport(rows=[_dummy_row(500, 0.08), _dummy_row(250, 0.12)])
    paths = emit_report(report, tmp_path)
    first = [p.read_bytes() for p in paths]
    csv_text = paths[0].read_text().splitlines()
    assert csv_text[0] == "run_id,N,epsilon,l,M,t,l1_mean,l1_std,events_total,wall_seconds"
    assert len(csv_text) == 3
    assert csv_text[1].startswith("N250,250,")   # rows sorted by N
    again = emit_report(report, tmp_path)
    assert [p.read_bytes() for p in again] == first


def test_emit_empty_report(tmp_path):
    paths = emit_report(ConvergenceReport(), tmp_path, prefix="empty")
    assert paths[0].read_text().count("\n") == 1   # header only
    eps_paths = emit_report(EpsilonReport(), tmp_path, prefix="eps_empty")
    assert eps_paths[0].read_text().splitlines() == ["epsilon,cells,l1_diff_to_half"]


# ---------------------------------------------------------------------------
# Experiments (desk-scale smoke)


def test_run_hydro_smoke():
    cfg = ExperimentConfig(n_ladder=(16, 32), replicas=2, t_end=0.05,
                           ref_cells=256, l_block=3, compare_bins=8,
                           young_bins=4, seed=5)
    report = run_hydro(cfg)
    rows = report.sorted_rows()
    assert [r.n_sites for r in rows] == [16, 32]
    for r in rows:
        assert np.isfinite(r.l1_mean) and np.isfinite(r.l1_std)
        assert r.events_total > 0
    assert set(report.ensembles) == {16, 32}
    assert report.reference["type"] == "fine-grid"
    assert report.reference["richardson_l1"] < 0.05


def test_run_hydro_reproducible():
    cfg = ExperimentConfig(n_ladder=(16,), replicas=2, t_end=0.05,
                           ref_cells=128, l_block=3, compare_bins=8, seed=5)
    r1 = run_hydro(cfg)
    r2 = run_hydro(cfg)
    a, b = r1.rows[0], r2.rows[0]
    assert a.l1_mean == b.l1_mean
    assert a.l1_std == b.l1_std
    assert a.events_total == b.events_total


def test_run_hydro_threads_match_serial():
    base = dict(n_ladder=(24,), replicas=3, t_end=0.05, ref_cells=128,
                l_block=3, compare_bins=8, seed=9)
    serial = run_hydro(ExperimentConfig(**base))
    threaded = run_hydro(ExperimentConfig(**base, threads=3))
    assert serial.rows[0].l1_mean == threaded.rows[0].l1_mean


def test_l_schedule_mode():
    cfg = ExperimentConfig(l_mode="n_quarter")
    from discoflux.hydro_harness import _block_radius

    assert _block_radius(cfg, 256) == 4
    assert _block_radius(cfg, 4096) == 8
    assert _block_radius(ExperimentConfig(), 4096) == 10


def test_epsilon_study_constant_everything_zero():
    cfg = ExperimentConfig(mode="epsilon", lambda_values=(1.5,),
                           lambda_breaks=(0.0,), profile="constant",
                           rho_const=0.7, levels=3, epsilon0=1.0 / 16.0,
                           t_end=0.2)
    report = run_epsilon_study(cfg)
    assert np.allclose(report.diffs(), 0.0, atol=1e-15)


def test_epsilon_study_steady_data_bounded_by_profile_perturbation():
    """Starting from the eps0 steady profile, the first Cauchy difference is
    bounded by twice the steady-profile perturbation: the eps0 run sits on its
    fixed point, and L1 contraction keeps the eps0/2 run within the initial
    offset of its own fixed point."""
    from discoflux import Grid1D, solve, steady_profile
    from discoflux.hydro_harness import build_model

    cfg = ExperimentConfig()
    model = build_model(cfg)
    eps0 = 1.0 / 16.0
    alpha, t = 0.5, 0.2
    fine = Grid1D(round(8.0 / (eps0 / 2.0)))
    m0 = steady_profile(model.flux.mollified(MollifierKernel(eps0)), alpha, fine)
    m1 = steady_profile(model.flux.mollified(MollifierKernel(eps0 / 2)), alpha, fine)
    sol0 = solve(model.flux, MollifierKernel(eps0), np.array(m0), t, fine)
    sol1 = solve(model.flux, MollifierKernel(eps0 / 2), np.array(m0), t, fine)
    diff = float(np.mean(np.abs(sol0.values - sol1.values)))
    bound = 2.0 * float(np.mean(np.abs(m0 - m1)))
    assert diff <= bound + 1e-6


def test_equilibrium_fluctuation_scale_positive(fixture_model):
    model_eps = fixture_model.mollified(MollifierKernel(256 ** -0.5))
    scale = equilibrium_fluctuation_scale(model_eps, 0.5, 256, 5, 10, seed=3)
    assert 0.0 < scale < 1.0


def test_young_estimates_from_report():
    cfg = ExperimentConfig(n_ladder=(32, 64), replicas=31, t_end=0.05,
                           ref_cells=128, l_block=3, compare_bins=8,
                           young_bins=4, seed=6)
    report = run_hydro(cfg)
    ests = young_estimates(report, cfg)
    assert set(ests) == {32, 64}
    assert ests[32].histograms.shape[0] == 4


# ---------------------------------------------------------------------------
# CLI


MODEL_KEYS = """
lambda_values = 2, 1
lambda_breaks = 0, 0.5
rate = indicator
profile = riemann
rho_left = 0.3333333333333333
rho_right = 0.4
"""


def test_cli_solve_and_steady(tmp_path):
    cfg = tmp_path / "a.cfg"
    cfg.write_text(MODEL_KEYS + "cells = 64\nepsilon = 0.0625\ntimes = 0.1\nalphas = 0.5\n")
    out = tmp_path / "out"
    assert cli_main(["solve", "--config", str(cfg), "--out", str(out)]) == 0
    solved = (out / "solve_t0.1.csv").read_text().splitlines()
    assert solved[0] == "x,rho"
    assert len(solved) == 65
    assert cli_main(["steady", "--config", str(cfg), "--out", str(out)]) == 0
    steady = (out / "steady_alpha0.5.csv").read_text().splitlines()
    assert steady[0] == "x,m_alpha_plus,m_alpha_minus"


def test_cli_zrp_and_couple(tmp_path):
    cfg = tmp_path / "b.cfg"
    cfg.write_text(MODEL_KEYS + "n_sites = 64\ntimes = 0.05\nl_block = 3\n"
                   "t_end = 0.1\nreplicas = 2\ncheckpoints = 4\nalpha = 0.5\n")
    out = tmp_path / "out"
    assert cli_main(["zrp", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "zrp_t0.05.csv").exists()
    assert (out / "zrp_blocks_t0.05.csv").exists()
    assert cli_main(["couple", "--config", str(cfg), "--out", str(out)]) == 0
    trace = (out / "couple_trace.csv").read_text().splitlines()
    assert trace[0] == "replica,t,discrepancy,uncoupled_pairs"
    entropy = (out / "couple_entropy.csv").read_text().splitlines()
    assert entropy[0] == "replica,j_id,value"
    assert len(entropy) == 3


def test_cli_audit(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(MODEL_KEYS + "cells = 128\nepsilon = 0.03125\nt_end = 0.4\n"
                   "snapshots = 64\nassert_decreasing = true\n")
    out = tmp_path / "out"
    assert cli_main(["audit", "--config", str(cfg), "--out", str(out)]) == 0
    audit = (out / "audit.csv").read_text().splitlines()
    assert audit[0] == "alpha,branch,j_id,residual"
    assert len(audit) == 1 + 12 * 9


def test_cli_hydro_epsilon_mode(tmp_path):
    cfg = tmp_path / "d.cfg"
    cfg.write_text(MODEL_KEYS + "mode = epsilon\nepsilon0 = 0.0625\nlevels = 3\n"
                   "t_end = 0.2\nassert_decreasing = true\n")
    out = tmp_path / "out"
    assert cli_main(["hydro", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "epsilon.csv").exists()
    assert (out / "epsilon_plot.dat").exists()


def test_cli_exit_codes(tmp_path, monkeypatch):
    bad = tmp_path / "bad.cfg"
    bad.write_text("nope = 1\n")
    assert cli_main(["solve", "--config", str(bad)]) == 1
    missing = tmp_path / "missing.cfg"
    assert cli_main(["solve", "--config", str(missing)]) == 1
    # a failing acceptance-style check exits 2
    cfg = tmp_path / "e.cfg"
    cfg.write_text(MODEL_KEYS + "n_ladder = 16, 32\nreplicas = 2\nt_end = 0.05\n"
                   "ref_cells = 128\nl_block = 3\ncompare_bins = 8\n"
                   "assert_decreasing = true\n")
    import discoflux.cli as cli_mod

    monkeypatch.setattr(cli_mod, "hydro_decrease_ok", lambda report: False)
    assert cli_main(["hydro", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_cli_seed_override_changes_output(tmp_path):
    cfg = tmp_path / "f.cfg"
    cfg.write_text(MODEL_KEYS + "n_sites = 32\ntimes = 0.05\nl_block = 3\nseed = 1\n")
    out1, out2, out3 = tmp_path / "o1", tmp_path / "o2", tmp_path / "o3"
    assert cli_main(["zrp", "--config", str(cfg), "--out", str(out1)]) == 0
    assert cli_main(["zrp", "--config", str(cfg), "--out", str(out2)]) == 0
    assert cli_main(["zrp", "--config", str(cfg), "--seed", "2", "--out", str(out3)]) == 0
    a = (out1 / "zrp_t0.05.csv").read_bytes()
    b = (out2 / "zrp_t0.05.csv").read_bytes()
    c = (out3 / "zrp_t0.05.csv").read_bytes()
    assert a == b
    assert a != c
