"""Steady-state families m_alpha solving F(x, m_alpha(x)) = alpha.

These x-dependent profiles play the role of the constants in Kruzkov-type
entropy inequalities: the flux along a steady profile is constant across the
speed field's discontinuities, which is what makes the adapted entropy
condition well defined.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .errors import SteadyStateInfeasibleError
from .flux_model import FluxModel, eval_flux

__all__ = [
    "SteadyStateFamily",
    "solve_steady",
    "steady_at",
    "steady_profile",
    "envelope_alpha",
]

_RESIDUAL_TARGET = 1e-12


def _bracket(model: FluxModel, branch: str):
    c = model.closure
    if c.increasing:
        lo = max(c.domain[0], 0.0)
        return lo, min(model.rho_max, c.domain[1])
    if c.rho_m is None:
        raise ValueError("non-monotone closure without an extremum is unsupported")
    if branch == "plus":
        return c.rho_m, min(model.rho_max, c.domain[1])
    return max(-model.rho_max, c.domain[0]), c.rho_m


def solve_steady(model: FluxModel, alpha: float, x: float, branch: str = "plus") -> float:
    """Density m with F(x, m) = alpha, found by bracketed root finding.

    Monotone closures ignore the branch; unimodal ones solve on
    [rho_m, rho_max] (plus) or [rho_min, rho_m] (minus).  The residual is
    polished to ~1e-12 via Newton steps on top of Brent's method.
    """
    lo, hi = _bracket(model, branch)
    f_lo = eval_flux(model, x, lo) - alpha
    f_hi = eval_flux(model, x, hi) - alpha
    if f_lo == 0.0:
        return float(lo)
    if f_hi == 0.0:
        return float(hi)
    if f_lo * f_hi > 0.0:
        attainable = tuple(sorted((f_lo + alpha, f_hi + alpha)))
        raise SteadyStateInfeasibleError(alpha, x, attainable)
    m = brentq(lambda r: eval_flux(model, x, r) - alpha, lo, hi,
               xtol=1e-15, rtol=8.9e-16, maxiter=200)
    lam = model.speed(x)
    scale = max(1.0, abs(alpha))
    for _ in range(3):
        resid = lam * model.closure(m) - alpha
        if abs(resid) <= _RESIDUAL_TARGET * scale:
            break
        slope = lam * model.closure.derivative(m)
        if slope == 0.0:
            break
        m = min(max(m - resid / slope, lo), hi)
    return float(m)


def steady_at(model: FluxModel, alpha: float, xs, branch: str = "plus") -> np.ndarray:
    """solve_steady vectorized over positions; errors carry the cell index."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    out = np.empty_like(xs)
    for i, x in enumerate(xs):
        try:
            out[i] = solve_steady(model, alpha, float(x), branch)
        except SteadyStateInfeasibleError as exc:
            raise SteadyStateInfeasibleError(alpha, float(x), exc.attainable, cell=i) from None
    return out


@lru_cache(maxsize=512)
def _steady_profile_cached(model, alpha: float, grid, branch: str):
    values = steady_at(model, alpha, grid.centers, branch)
    values.flags.writeable = False
    return values


def steady_profile(model: FluxModel, alpha: float, grid, branch: str = "plus") -> np.ndarray:
    """Per-cell-center steady densities, cached by (model, alpha, grid, branch)."""
    return _steady_profile_cached(model, float(alpha), grid, branch)


@dataclass(frozen=True, eq=False)
class SteadyStateFamily:
    """Evaluator x -> m_alpha^branch(x) for a fixed flux level."""

    model: FluxModel
    alpha: float
    branch: str = "plus"

    def __call__(self, x):
        if np.ndim(x) == 0:
            return solve_steady(self.model, self.alpha, float(x), self.branch)
        return steady_at(self.model, self.alpha, x, self.branch)

    def valid_at(self, x) -> bool:
        try:
            self(x)
            return True
        except SteadyStateInfeasibleError:
            return False

    def residual(self, x) -> float:
        m = self(x)
        return float(np.max(np.abs(np.asarray(eval_flux(self.model, x, m)) - self.alpha)))


def envelope_alpha(model: FluxModel, rho_profile, n_samples: int = 2048) -> float:
    """Smallest flux level (1% granularity) whose steady family dominates the profile.

    The comparison m_alpha(x) >= rho(x) is done in fugacity space,
    alpha >= lambda(x) h(max(rho(x), rho_m)), which stays meaningful even when
    m_alpha is unattainably large on part of the domain.
    """
    if callable(rho_profile):
        xs = (np.arange(n_samples) + 0.5) / n_samples
        rho = np.asarray(rho_profile(xs), dtype=float)
    else:
        xs, rho = rho_profile
        xs = np.asarray(xs, dtype=float)
        rho = np.asarray(rho, dtype=float)
    model.closure.check_domain(rho)
    floor = model.closure.rho_m if model.closure.rho_m is not None else -np.inf
    effective = np.maximum(rho, floor)
    demand = np.asarray(model.speed(xs)) * np.asarray(model.closure(effective))
    # The fugacity comparison makes max(demand) the exact smallest dominating
    # level, well inside the 1% granularity the callers rely on.
    return float(np.max(demand, initial=model.m0))
