"""Basic coupling of two zero range processes and the microscopic entropy functional.

Two marginals (eta, xi) share clocks: per site and displacement there are three
channels: a joint move at rate lambda_eps * min(g(eta), g(xi)) moving a
particle in both marginals, and excess channels at the positive parts of the
rate differences moving only one marginal.  Nondecreasing g makes the coupling
order preserving, which is checked event by event on demand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _k
from .errors import EventBudgetExceededError, OrderingBrokenError
from .zrp_core import (
    Configuration,
    JumpKernel,
    ZrpModel,
    _block_size,
    _site_speeds,
    block_profile_array,
)

__all__ = [
    "CoupledConfiguration",
    "DiscrepancyTrace",
    "CoupledTrajectory",
    "coupled_step",
    "run_coupled_until",
    "discrepancy",
    "uncoupled_pairs",
    "ordered_preservation",
    "OrderTrace",
    "record_coupled_trajectory",
    "microscopic_entropy",
    "coupled_from_profiles",
]


@dataclass(eq=False)
class CoupledConfiguration:
    """Two configurations on one lattice evolving under the basic coupling."""

    eta: Configuration
    xi: Configuration
    model: ZrpModel
    kernel: JumpKernel

    def __post_init__(self):
        if self.eta.n_sites != self.xi.n_sites:
            raise ValueError("marginals must share the lattice size")
        if self.eta.sim_time != self.xi.sim_time:
            raise ValueError("marginals must share the simulation time")

    @property
    def n_sites(self) -> int:
        return self.eta.n_sites

    @property
    def sim_time(self) -> float:
        return self.eta.sim_time

    def _set_time(self, t: float) -> None:
        self.eta.sim_time = t
        self.xi.sim_time = t

    def copy(self) -> "CoupledConfiguration":
        return CoupledConfiguration(self.eta.copy(), self.xi.copy(), self.model, self.kernel)


def coupled_from_profiles(model: ZrpModel, kernel: JumpKernel, rho_profile, alpha: float,
                          n_sites: int, rng) -> CoupledConfiguration:
    """eta from the product measure of a profile, xi from equilibrium at alpha."""
    from .zrp_core import sample_equilibrium, sample_product_measure

    eta = sample_product_measure(model, rho_profile, n_sites, rng)
    xi = sample_equilibrium(model, alpha, n_sites, rng)
    return CoupledConfiguration(eta, xi, model, kernel)


class _CoupledEngine:
    def __init__(self, cc: CoupledConfiguration):
        n = cc.n_sites
        self.lam = np.asarray(_site_speeds(cc.model.speed, n))
        n_max = max(cc.eta.total_particles, cc.xi.total_particles)
        self.gtab = cc.model.rate.table(n_max + 1)
        self.leavesJ = np.empty(n)
        self.leavesE = np.empty(n)
        self.leavesX = np.empty(n)
        self.treeJ = np.zeros(n + 1)
        self.treeE = np.zeros(n + 1)
        self.treeX = np.zeros(n + 1)
        self.tJ, self.tE, self.tX = _k.coupled_weights(
            cc.eta.occupancies, cc.xi.occupancies, self.lam, self.gtab,
            self.leavesJ, self.leavesE, self.leavesX)
        _k.fw_build(self.treeJ, self.leavesJ)
        _k.fw_build(self.treeE, self.leavesE)
        _k.fw_build(self.treeX, self.leavesX)
        self.events_since_rebuild = 0

    @property
    def total(self) -> float:
        return self.tJ + self.tE + self.tX


def _coupled_drive(cc: CoupledConfiguration, t_target: float, rng, max_events: int,
                   rebuild_every: int, check_order: bool):
    eng = _CoupledEngine(cc)
    n = cc.n_sites
    events_total = 0
    last_dt = math.inf
    hit_budget = False
    if eng.total <= 0.0:
        if math.isfinite(t_target) and t_target > cc.sim_time:
            cc._set_time(t_target)
        return events_total, last_dt, hit_budget
    while cc.sim_time < t_target:
        remaining = max_events - events_total
        if remaining <= 0:
            hit_budget = True
            break
        expected = (t_target - cc.sim_time) * n * max(eng.total, 1e-12)
        u01 = rng.random(_block_size(min(expected, float(remaining))))
        (t, tJ, tE, tX, events, esr, used, status, dt, viol) = _k.coupled_run(
            cc.eta.occupancies, cc.xi.occupancies, eng.lam, eng.gtab,
            eng.treeJ, eng.treeE, eng.treeX, eng.leavesJ, eng.leavesE, eng.leavesX,
            eng.tJ, eng.tE, eng.tX, cc.kernel.displacements, cc.kernel.cdf,
            float(n), cc.sim_time, t_target, u01, remaining,
            rebuild_every, eng.events_since_rebuild, check_order,
        )
        cc._set_time(t)
        eng.tJ, eng.tE, eng.tX = tJ, tE, tX
        eng.events_since_rebuild = esr
        events_total += events
        if events > 0:
            last_dt = dt
        if status == _k.STATUS_ORDER_BROKEN:
            raise OrderingBrokenError(int(viol), cc.sim_time)
        if status == _k.STATUS_DONE:
            break
        if status == _k.STATUS_BUDGET:
            hit_budget = True
            break
    return events_total, last_dt, hit_budget


def coupled_step(cc: CoupledConfiguration, rng):
    """One event of the coupled process; returns (cc, dt), dt = inf when quiescent."""
    eng = _CoupledEngine(cc)
    if eng.total <= 0.0:
        return cc, math.inf
    u01 = rng.random(16)
    (t, tJ, tE, tX, events, esr, used, status, dt, viol) = _k.coupled_run(
        cc.eta.occupancies, cc.xi.occupancies, eng.lam, eng.gtab,
        eng.treeJ, eng.treeE, eng.treeX, eng.leavesJ, eng.leavesE, eng.leavesX,
        eng.tJ, eng.tE, eng.tX, cc.kernel.displacements, cc.kernel.cdf,
        float(cc.n_sites), cc.sim_time, math.inf, u01, 1, 10 ** 18, 0, False,
    )
    cc._set_time(t)
    return cc, dt


def run_coupled_until(cc: CoupledConfiguration, t_target: float, rng,
                      max_events: int = 10 ** 9, rebuild_every: int = 1_000_000,
                      check_order: bool = False) -> CoupledConfiguration:
    """Advance the coupled pair to t_target (optionally asserting order)."""
    if t_target < cc.sim_time:
        raise ValueError("t_target must be >= the current sim_time")
    events, _, hit_budget = _coupled_drive(cc, t_target, rng, max_events,
                                           rebuild_every, check_order)
    if hit_budget:
        raise EventBudgetExceededError(cc.eta, events, t_target)
    cc.eta.verify_particle_total()
    cc.xi.verify_particle_total()
    return cc


def discrepancy(cc: CoupledConfiguration) -> float:
    """N^{-1} sum_u |eta(u) - xi(u)|."""
    return float(np.abs(cc.eta.occupancies - cc.xi.occupancies).sum()) / cc.n_sites


def uncoupled_pairs(cc: CoupledConfiguration) -> int:
    """Count of (u, u+z) pairs over the kernel support where the marginals
    are strictly oppositely ordered."""
    d = cc.eta.occupancies - cc.xi.occupancies
    total = 0
    for z in cc.kernel.displacements:
        dz = np.roll(d, -int(z))
        total += int(np.sum((d > 0) & (dz < 0)) + np.sum((d < 0) & (dz > 0)))
    return total


@dataclass
class OrderTrace:
    """Result of an order-preservation run (violations raise instead)."""

    ok: bool
    events: int
    t_final: float


def ordered_preservation(cc: CoupledConfiguration, rng, n_events: int = 100_000) -> OrderTrace:
    """Run n_events asserting eta <= xi sitewise after every event.

    Requires initially ordered marginals; a violation raises
    OrderingBrokenError naming the first offending site.
    """
    if np.any(cc.eta.occupancies > cc.xi.occupancies):
        raise ValueError("marginals must start sitewise ordered (eta <= xi)")
    events, _, _ = _coupled_drive(cc, math.inf, rng, n_events, 1_000_000, True)
    return OrderTrace(ok=True, events=events, t_final=cc.sim_time)


@dataclass
class DiscrepancyTrace:
    """Checkpointed discrepancy and uncoupled-pair counts along a trajectory."""

    times: np.ndarray
    discrepancies: np.ndarray
    uncoupled: np.ndarray


def trace_discrepancy(cc: CoupledConfiguration, times, rng,
                      max_events: int = 10 ** 9) -> DiscrepancyTrace:
    times = np.asarray(times, dtype=float)
    disc = np.empty(times.size)
    unc = np.empty(times.size, dtype=np.int64)
    for i, t in enumerate(times):
        if t > cc.sim_time:
            run_coupled_until(cc, float(t), rng, max_events=max_events)
        disc[i] = discrepancy(cc)
        unc[i] = uncoupled_pairs(cc)
    return DiscrepancyTrace(times, disc, unc)


# ---------------------------------------------------------------------------
# Microscopic entropy functional


@dataclass(eq=False)
class CoupledTrajectory:
    """Snapshots of a coupled run: initial state plus midpoint-time states."""

    n_sites: int
    times: np.ndarray              # midpoint snapshot times
    eta_states: np.ndarray         # (S, N) occupancies
    xi_states: np.ndarray
    eta0: np.ndarray
    xi0: np.ndarray
    model: ZrpModel


def record_coupled_trajectory(cc: CoupledConfiguration, t_end: float, rng,
                              snapshots_per_unit_time: int = 50,
                              max_events: int = 10 ** 9) -> CoupledTrajectory:
    """Advance to t_end recording at midpoint times (k+1/2) / cadence."""
    n_snap = max(2, round(t_end * snapshots_per_unit_time))
    times = (np.arange(n_snap) + 0.5) * (t_end / n_snap)
    eta0 = cc.eta.occupancies.copy()
    xi0 = cc.xi.occupancies.copy()
    eta_states = np.empty((n_snap, cc.n_sites), dtype=np.int64)
    xi_states = np.empty((n_snap, cc.n_sites), dtype=np.int64)
    for k, t in enumerate(times):
        run_coupled_until(cc, float(t), rng, max_events=max_events)
        eta_states[k] = cc.eta.occupancies
        xi_states[k] = cc.xi.occupancies
    run_coupled_until(cc, t_end, rng, max_events=max_events)
    return CoupledTrajectory(cc.n_sites, times, eta_states, xi_states, eta0, xi0, cc.model)


def microscopic_entropy(traj: CoupledTrajectory, J, l: int,
                        model: ZrpModel = None) -> float:
    """Discrete microscopic entropy functional of a coupled trajectory.

    Time integral (midpoint over snapshots) of
      N^{-1} sum_u [ dJ/ds |eta^l - xi^l| + dJ/dx lambda_eps(u/N) |h(eta^l) - h(xi^l)| ]
    plus the initial term N^{-1} sum_u J(0, u/N) |eta0^l - xi0^l|.
    """
    model = model or traj.model
    n = traj.n_sites
    xs = np.arange(n, dtype=float) / n
    lam = np.asarray(_site_speeds(model.speed, n))
    h = model.closure
    width = float(traj.times[1] - traj.times[0]) if traj.times.size > 1 else float(traj.times[0] * 2)
    total = 0.0
    for k, t in enumerate(traj.times):
        eta_l = _blocks(traj.eta_states[k], l)
        xi_l = _blocks(traj.xi_states[k], l)
        term = (J.dt(t, xs) * np.abs(eta_l - xi_l)
                + J.dx(t, xs) * lam * np.abs(np.asarray(h(eta_l)) - np.asarray(h(xi_l))))
        total += width * float(term.sum()) / n
    eta0_l = _blocks(traj.eta0, l)
    xi0_l = _blocks(traj.xi0, l)
    total += float(np.sum(J(0.0, xs) * np.abs(eta0_l - xi0_l))) / n
    return total


def _blocks(occ: np.ndarray, l: int) -> np.ndarray:
    return block_profile_array(occ, l)
