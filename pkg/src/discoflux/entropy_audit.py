"""Adapted entropy diagnostics.

The residual operator evaluates the inequality

    integral( |rho - m_a(x)| dJ/dt + sgn(rho - m_a(x)) (F(x,rho) - a) dJ/dx )
    + integral( |rho0 - m_a(x)| J(0, x) )  >=  0

over a finite library of flux levels a and nonnegative test functions J, by
midpoint quadrature on the solver's own grid and snapshot times.  Young-measure
concentration is estimated from ensembles of particle configurations via
per-bin statistics of block averages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .flux_model import FluxModel, eval_flux
from .fv_solver import Grid1D, SolutionSeries, _center_speeds
from .steady_states import envelope_alpha, steady_profile

__all__ = [
    "TestFunction",
    "test_function_library",
    "alpha_library",
    "EntropyReport",
    "entropy_residual",
    "residual_report",
    "initial_recovery",
    "series_from_evaluator",
    "mirrored_torus_evaluator",
    "YoungMeasureEstimate",
    "ConcentrationSummary",
    "young_concentration",
]


# ---------------------------------------------------------------------------
# Test functions: tensor products of a spatial bump and a temporal plateau


def _f_exp(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0.0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def _smoothstep(s):
    """C-infinity monotone step: 0 for s <= 0, 1 for s >= 1."""
    a = _f_exp(s)
    b = _f_exp(1.0 - np.asarray(s, dtype=float))
    return a / (a + b + 1e-300)


def _smoothstep_deriv(s):
    s = np.asarray(s, dtype=float)
    a = _f_exp(s)
    b = _f_exp(1.0 - s)
    da = np.zeros_like(s)
    pos = s > 0.0
    da[pos] = a[pos] / s[pos] ** 2
    db = np.zeros_like(s)
    neg = s < 1.0
    db[neg] = b[neg] / (1.0 - s[neg]) ** 2
    denom = (a + b + 1e-300) ** 2
    return (da * b + a * db) / denom


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Nonnegative smooth J(t, x) = psi(t) B(x), compactly supported.

    B is a unit-amplitude bump of half-width ``x_halfwidth`` at ``x_center``;
    psi equals 1 on [0, t_flat] and decays smoothly to 0 at t_cut, so the
    initial-data term of the entropy inequality is exercised.
    """

    __test__ = False   # not a pytest collection target

    id: str
    x_center: float
    x_halfwidth: float
    t_flat: float
    t_cut: float

    @property
    def time_scale(self) -> float:
        return self.t_cut - self.t_flat

    def _bump(self, x):
        r = (np.asarray(x, dtype=float) - self.x_center) / self.x_halfwidth
        out = np.zeros_like(r)
        inside = np.abs(r) < 1.0
        ri = r[inside]
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - ri * ri))
        return out

    def _bump_deriv(self, x):
        r = (np.asarray(x, dtype=float) - self.x_center) / self.x_halfwidth
        out = np.zeros_like(r)
        inside = np.abs(r) < 1.0
        ri = r[inside]
        core = np.exp(1.0 - 1.0 / (1.0 - ri * ri))
        out[inside] = core * (-2.0 * ri / (1.0 - ri * ri) ** 2) / self.x_halfwidth
        return out

    def _psi(self, t):
        return _smoothstep((self.t_cut - t) / self.time_scale)

    def _psi_deriv(self, t):
        return -_smoothstep_deriv((self.t_cut - t) / self.time_scale) / self.time_scale

    def __call__(self, t, x):
        return float(self._psi(t)) * self._bump(x)

    def dt(self, t, x):
        return float(self._psi_deriv(t)) * self._bump(x)

    def dx(self, t, x):
        return float(self._psi(t)) * self._bump_deriv(x)


def test_function_library(t_end: float,
                          centers=(0.3, 0.5, 0.7),
                          halfwidths=(0.06, 0.12, 0.2)) -> list:
    """Default 3 centers x 3 widths tensor-bump library on [0, t_end) x (0, 1)."""
    out = []
    for c in centers:
        for w in halfwidths:
            out.append(TestFunction(
                id=f"bump_c{c:g}_w{w:g}",
                x_center=float(c),
                x_halfwidth=float(w),
                t_flat=0.3 * t_end,
                t_cut=0.85 * t_end,
            ))
    return out


def alpha_library(model: FluxModel, rho_profile, size: int = 12) -> np.ndarray:
    """Flux levels spanning [M0, 1.2 * envelope_alpha(rho_profile)]."""
    top = 1.2 * envelope_alpha(model, rho_profile)
    return np.linspace(model.m0, top, size)


# ---------------------------------------------------------------------------
# Residual operators


@dataclass
class EntropyReport:
    """Residuals per (alpha, branch, test function)."""

    rows: list = field(default_factory=list)   # (alpha, branch, j_id, residual)

    def min_residual(self) -> float:
        return min(r[3] for r in self.rows) if self.rows else math.inf

    def worst_row(self):
        return min(self.rows, key=lambda r: r[3]) if self.rows else None


def _check_spacing(series: SolutionSeries, J: TestFunction) -> float:
    times = series.times
    if times.size < 2:
        raise ValueError("need at least two snapshots for the time quadrature")
    spacings = np.diff(times)
    dt_snap = float(np.max(spacings))
    if dt_snap > J.time_scale / 20.0 + 1e-15:
        raise ValueError(
            f"snapshot spacing {dt_snap!r} too coarse for test function "
            f"{J.id} (time scale {J.time_scale!r})"
        )
    return dt_snap


def entropy_residual(series: SolutionSeries, model: FluxModel, alpha: float,
                     branch: str, J: TestFunction) -> float:
    """Discrete adapted entropy residual of a solution series; sgn(0) = 0."""
    _check_spacing(series, J)
    grid = series.grid
    xs = grid.centers
    m = steady_profile(model, alpha, grid, branch)
    lam = _center_speeds(model.speed, grid)
    total = 0.0
    times = series.times
    width = float(times[1] - times[0])  # midpoint ladder: uniform spacing
    for k, t in enumerate(times):
        rho = series.states[k]
        flux = lam * np.asarray(model.closure(rho))
        diff = rho - m
        integrand = (np.abs(diff) * J.dt(t, xs)
                     + np.sign(diff) * (flux - alpha) * J.dx(t, xs))
        total += width * float(np.sum(integrand)) * grid.dx
    init = float(np.sum(np.abs(series.rho0 - m) * J(0.0, xs))) * grid.dx
    return total + init


def residual_report(series: SolutionSeries, model: FluxModel, alphas, Js,
                    branches=("plus",)) -> EntropyReport:
    report = EntropyReport()
    for alpha in np.atleast_1d(alphas):
        for branch in branches:
            for J in Js:
                r = entropy_residual(series, model, float(alpha), branch, J)
                report.rows.append((float(alpha), branch, J.id, r))
    return report


def initial_recovery(series: SolutionSeries, rho0, L: float, t_min: float = None,
                     center: float = 0.5) -> float:
    """L1 distance between the state nearest t_min and rho0 on a window.

    The window is the torus ball of radius L around ``center``; t_min = 0
    compares the stored initial profile with itself (exactly zero).
    """
    grid = series.grid
    xs = grid.centers
    dist = np.abs(xs - center)
    dist = np.minimum(dist, 1.0 - dist)
    mask = dist <= L
    rho0_arr = np.asarray(rho0(xs) if callable(rho0) else rho0, dtype=float)
    if t_min is None:
        t_min = float(series.times[0])
    if t_min <= 0.0:
        state = series.rho0
    else:
        k = int(np.argmin(np.abs(series.times - t_min)))
        state = series.states[k]
    return float(np.sum(np.abs(state[mask] - rho0_arr[mask])) * grid.dx)


# ---------------------------------------------------------------------------
# Series construction from analytic evaluators


def series_from_evaluator(evaluator, grid: Grid1D, t_end: float, n_snapshots: int,
                          model_id: str = "analytic") -> SolutionSeries:
    """Sample an analytic rho(t, x) on midpoint times for the residual operators."""
    times = (np.arange(n_snapshots) + 0.5) * (t_end / n_snapshots)
    xs = grid.centers
    states = np.stack([np.asarray(evaluator(t, xs), dtype=float) for t in times])
    rho0 = np.asarray(evaluator(0.0, xs), dtype=float)
    return SolutionSeries(grid, times, states, rho0, final_time=t_end,
                          final_values=np.asarray(evaluator(t_end, xs), dtype=float),
                          model_id=model_id)


def mirrored_torus_evaluator(riemann_solution, x_jump: float):
    """Space-reflect a single-interface solution about its jump on the torus.

    The reflection turns the admissible interface wave into an inadmissible
    one (flux continuity and the adapted condition are both violated), giving
    the audit a crafted non-entropic profile.
    """

    def evaluator(t, x):
        xi = x_jump - np.asarray(x, dtype=float)
        xi = (xi + 0.5) % 1.0 - 0.5
        return riemann_solution(t, xi)

    return evaluator


# ---------------------------------------------------------------------------
# Young-measure estimates


@dataclass
class YoungMeasureEstimate:
    """Per-x-bin statistics of block averages collected across an ensemble.

    Histograms and pooled moments describe the empirical Young measure built
    from block averages.  ``bin_mean_var`` is the ensemble variance of the
    per-replica bin averages of the raw occupancy field (the empirical-measure
    pairing with the bin indicator); unlike the block field it carries no
    l-window edge bias, so its law-of-large-numbers decay in N is clean.
    """

    bin_edges: np.ndarray
    value_edges: np.ndarray
    histograms: np.ndarray          # (n_bins, n_value_bins), rows sum to 1
    pooled_mean: np.ndarray
    pooled_var: np.ndarray
    bin_mean_var: np.ndarray        # ensemble variance of per-replica bin means
    counts: np.ndarray
    n_replicas: int
    block_radius: int

    @classmethod
    def from_ensemble(cls, configs, l: int, n_bins: int = 20,
                      n_value_bins: int = 64, value_range=None) -> "YoungMeasureEstimate":
        from .zrp_core import block_average_profile

        if len(configs) < 2:
            raise ValueError("need at least two replicas")
        n = configs[0].n_sites
        site_bins = (np.arange(n) * n_bins) // n
        blocks = np.stack([block_average_profile(c, l) for c in configs])
        raw = np.stack([c.occupancies.astype(float) for c in configs])
        if value_range is None:
            value_range = (float(blocks.min()), float(blocks.max()) + 1e-12)
        value_edges = np.linspace(value_range[0], value_range[1], n_value_bins + 1)
        bin_edges = np.linspace(0.0, 1.0, n_bins + 1)
        histograms = np.zeros((n_bins, n_value_bins))
        pooled_mean = np.zeros(n_bins)
        pooled_var = np.zeros(n_bins)
        bin_mean_var = np.zeros(n_bins)
        counts = np.zeros(n_bins, dtype=np.int64)
        for b in range(n_bins):
            cols = site_bins == b
            counts[b] = int(cols.sum()) * len(configs)
            if counts[b] == 0:
                continue
            pool = blocks[:, cols].ravel()
            hist, _ = np.histogram(pool, bins=value_edges)
            histograms[b] = hist / max(hist.sum(), 1)
            pooled_mean[b] = pool.mean()
            pooled_var[b] = pool.var(ddof=1) if pool.size > 1 else 0.0
            bin_mean_var[b] = raw[:, cols].mean(axis=1).var(ddof=1)
        return cls(bin_edges, value_edges, histograms, pooled_mean, pooled_var,
                   bin_mean_var, counts, len(configs), l)


@dataclass
class ConcentrationSummary:
    """Concentration diagnostics; both pooled and bin-mean variances reported."""

    pooled_var: np.ndarray
    bin_mean_var: np.ndarray
    max_pooled_var: float
    mean_pooled_var: float
    max_bin_mean_var: float
    mean_bin_mean_var: float
    excluded_bins: list


def young_concentration(estimate: YoungMeasureEstimate) -> ConcentrationSummary:
    """Variance summaries over the occupied x-bins.

    ``pooled_var`` is the variance of the raw block averages pooled per bin
    (the single-site law scale Var(eta)/(2l+1) at equilibrium).
    ``bin_mean_var`` is the ensemble variance of per-replica bin means, the
    law-of-large-numbers quantity that decays with N.
    """
    if estimate.n_replicas < 30:
        raise ValueError("concentration estimates need an ensemble of >= 30 replicas")
    occupied = estimate.counts > 0
    excluded = np.nonzero(~occupied)[0].tolist()
    pooled = estimate.pooled_var[occupied]
    bmv = estimate.bin_mean_var[occupied]
    return ConcentrationSummary(
        pooled_var=pooled,
        bin_mean_var=bmv,
        max_pooled_var=float(pooled.max()),
        mean_pooled_var=float(pooled.mean()),
        max_bin_mean_var=float(bmv.max()),
        mean_bin_mean_var=float(bmv.mean()),
        excluded_bins=excluded,
    )
