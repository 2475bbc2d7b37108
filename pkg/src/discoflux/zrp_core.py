"""Zero range process: equilibrium toolbox and exact event-driven dynamics.

A particle leaves site u at rate lambda_eps(u/N) * g(eta(u)) and jumps by a
displacement drawn from a finite-range kernel; the generator is sped up by the
Euler factor N.  Single-site equilibrium laws have weights phi^n / g(n)! with
partition function Z(phi); R(phi) = phi Z'(phi)/Z(phi) is the mean occupation
and h = R^{-1} the macroscopic closure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels as _k
from .errors import (
    ClosureDomainError,
    EventBudgetExceededError,
    SeriesDivergenceError,
)
from .flux_model import (
    FluxModel,
    LinearClosure,
    MollifierKernel,
    RateFunction,
    SaturatingClosure,
    SeriesClosure,
    SpeedField,
    identity_rate,
    indicator_rate,
)

__all__ = [
    "Configuration",
    "JumpKernel",
    "EquilibriumTables",
    "ZrpModel",
    "zrp_model",
    "partition_function",
    "mean_occupation",
    "sample_site",
    "sample_product_measure",
    "sample_equilibrium",
    "gillespie_step",
    "run_until",
    "run_until_with_stats",
    "run_events",
    "RunStats",
    "block_average",
    "block_average_profile",
    "block_profile_array",
    "empirical_pairing",
]


# ---------------------------------------------------------------------------
# Configurations and jump kernels


@dataclass(eq=False)
class Configuration:
    """Occupancy numbers on the periodic lattice of N sites."""

    occupancies: np.ndarray
    sim_time: float = 0.0

    def __post_init__(self):
        occ = np.ascontiguousarray(self.occupancies, dtype=np.int64)
        if occ.ndim != 1 or occ.size == 0:
            raise ValueError("occupancies must be a nonempty 1-D array")
        if np.any(occ < 0):
            raise ValueError("occupancies must be nonnegative")
        self.occupancies = occ
        self._total = int(occ.sum())

    @property
    def n_sites(self) -> int:
        return self.occupancies.size

    @property
    def total_particles(self) -> int:
        return self._total

    def verify_particle_total(self) -> int:
        """Recompute the particle total and check it against the tracked value."""
        exact = int(self.occupancies.sum())
        if exact != self._total:
            raise RuntimeError(
                f"particle bookkeeping broken: tracked {self._total}, actual {exact}"
            )
        return exact

    def copy(self) -> "Configuration":
        return Configuration(self.occupancies.copy(), self.sim_time)


@dataclass(frozen=True, eq=False)
class JumpKernel:
    """Finite-range displacement law p(z) with unit mean drift and p(1) > 0."""

    displacements: np.ndarray
    probabilities: np.ndarray
    cdf: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        disp = np.ascontiguousarray(self.displacements, dtype=np.int64)
        prob = np.ascontiguousarray(self.probabilities, dtype=float)
        if disp.shape != prob.shape or disp.ndim != 1 or disp.size == 0:
            raise ValueError("displacements and probabilities must be matching 1-D arrays")
        if np.any(disp == 0):
            raise ValueError("p(0) must be 0 (omit the zero displacement)")
        if len(set(disp.tolist())) != disp.size:
            raise ValueError("duplicate displacements")
        if np.any(prob <= 0.0):
            raise ValueError("probabilities must be positive (omit zero entries)")
        if abs(prob.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1")
        if abs(float(np.dot(disp, prob)) - 1.0) > 1e-12:
            raise ValueError("mean drift must equal 1")
        if 1 not in disp.tolist():
            raise ValueError("p(1) > 0 required (irreducibility)")
        object.__setattr__(self, "displacements", disp)
        object.__setattr__(self, "probabilities", prob)
        object.__setattr__(self, "cdf", np.cumsum(prob))

    @property
    def range(self) -> int:
        return int(np.max(np.abs(self.displacements)))

    @classmethod
    def totally_asymmetric(cls) -> "JumpKernel":
        """Nearest-neighbor kernel p(1) = 1 (drift exactly 1)."""
        return cls(np.array([1]), np.array([1.0]))


# ---------------------------------------------------------------------------
# Equilibrium tables


class EquilibriumTables:
    """Truncated series tables for Z(phi), R(phi) and site laws of a rate g.

    Terms t_n = phi^n / g(n)! are summed until a certified geometric tail
    bound drops below ``tail_rel`` relative to the partial sums; fugacities
    that cannot be certified within the truncation cap are rejected.
    ``phi_cap`` is the largest certified fugacity, additionally clipped so the
    reachable density stays at or below ``rho_cap``.
    """

    def __init__(self, g: RateFunction, cap: int = 4000, rho_cap: float = 50.0,
                 tail_rel: float = 1e-14):
        g.validate()
        if not g.subquadratic_at(cap):
            raise ValueError(f"g({cap})/{cap}^2 must be < 1e-3 (sub-quadratic growth)")
        self.g = g
        self.cap = int(cap)
        self.rho_cap = float(rho_cap)
        self.tail_rel = float(tail_rel)
        self._gtab = g.table(cap)
        self._cache = {}
        self.radius_guard = float(self._gtab[-1]) * (1.0 - 1e-6)
        self.phi_cap = self._find_phi_cap()

    # -- series internals

    def _sums(self, phi: float):
        """(Z, S1, S2, n_used, certified) with S_k = sum n^k t_n."""
        phi = float(phi)
        if phi < 0.0:
            raise ClosureDomainError("fugacity must be nonnegative")
        hit = self._cache.get(phi)
        if hit is not None:
            return hit
        if phi == 0.0:
            out = (1.0, 0.0, 0.0, 0, True)
            self._cache[phi] = out
            return out
        gt = self._gtab
        with np.errstate(over="ignore", invalid="ignore"):
            ratios = phi / gt[1:]
            terms = np.cumprod(ratios)
        if not np.all(np.isfinite(terms)):
            raise SeriesDivergenceError(
                f"series overflow at phi={phi!r}; fugacity too large for the cap"
            )
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            n = np.arange(1, self.cap + 1, dtype=float)
            z_part = 1.0 + np.cumsum(terms)
            s1_part = np.cumsum(n * terms)
            # certified geometric tail: ratios are nonincreasing, so beyond
            # index n the terms are dominated by t_n * r^j, r = phi/g(n+1).
            r_next = ratios[1:]
            conv = r_next < 1.0
            tail0 = np.where(conv, terms[:-1] * r_next / (1.0 - r_next), np.inf)
            tail1 = np.where(
                conv,
                tail0 * n[:-1] + terms[:-1] * r_next / (1.0 - r_next) ** 2,
                np.inf,
            )
            ok = conv & (tail0 <= self.tail_rel * z_part[:-1]) & (
                tail1 <= self.tail_rel * np.maximum(s1_part[:-1], 1e-300)
            )
            if not ok.any():
                out = (float(z_part[-1]), float(s1_part[-1]),
                       float(np.sum(n * n * terms)), self.cap, False)
                self._cache[phi] = out
                return out
            first = int(np.argmax(ok))  # index into terms[:-1]; n_used = first + 1
            nu = first + 1
            s2 = float(np.sum(n[:nu] * n[:nu] * terms[:nu]))
        out = (float(z_part[first]), float(s1_part[first]), s2, nu, True)
        self._cache[phi] = out
        return out

    def _require(self, phi: float):
        z, s1, s2, nu, certified = self._sums(phi)
        if not certified:
            raise SeriesDivergenceError(
                f"partition series not certified at phi={phi!r} within cap={self.cap}"
            )
        return z, s1, s2, nu

    def _find_phi_cap(self) -> float:
        def certifiable(phi):
            try:
                return self._sums(phi)[4]
            except SeriesDivergenceError:
                return False

        hi = self.radius_guard
        if certifiable(hi):
            star = hi
        else:
            lo = 0.0
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if certifiable(mid):
                    lo = mid
                else:
                    hi = mid
            star = lo * (1.0 - 1e-12)
            if star <= 0.0:
                raise SeriesDivergenceError("no certifiable fugacity below the radius guard")
        if self.mean_occupation(star) <= self.rho_cap:
            return star
        # shrink so the reachable density matches rho_cap
        lo, hi = 0.0, star
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.mean_occupation(mid) < self.rho_cap:
                lo = mid
            else:
                hi = mid
        return lo

    # -- public surface

    def partition_function(self, phi: float) -> float:
        return self._require(phi)[0]

    def mean_occupation(self, phi: float) -> float:
        z, s1, _, _ = self._require(phi)
        return s1 / z

    def mean_occupation_with_derivative(self, phi):
        """Vectorized (R(phi), R'(phi)) for the closure's Newton polish."""
        scalar = np.ndim(phi) == 0
        p = np.atleast_1d(np.asarray(phi, dtype=float))
        R = np.empty_like(p)
        dR = np.empty_like(p)
        for i, ph in enumerate(p):
            if ph == 0.0:
                R[i] = 0.0
                dR[i] = 1.0 / float(self._gtab[1])
                continue
            z, s1, s2, _ = self._require(ph)
            R[i] = s1 / z
            dR[i] = (s2 * z - s1 * s1) / (ph * z * z)
        if scalar:
            return float(R[0]), float(dR[0])
        return R, dR

    def site_pmf(self, phi: float) -> np.ndarray:
        """Truncated single-site law P(n) = phi^n / (Z g(n)!), renormalized."""
        z, _, _, nu = self._require(phi)
        if nu == 0:
            return np.array([1.0])
        terms = np.empty(nu + 1)
        terms[0] = 1.0
        t = 1.0
        for n in range(1, nu + 1):
            t *= phi / self._gtab[n]
            terms[n] = t
        return terms / terms.sum()

    def sample_occupancies(self, phis: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Independent draws, one per entry of ``phis`` (grouped by unique value)."""
        phis = np.asarray(phis, dtype=float)
        out = np.empty(phis.shape, dtype=np.int64)
        values, inverse = np.unique(phis, return_inverse=True)
        for j, phi in enumerate(values):
            mask = inverse == j
            cdf = np.cumsum(self.site_pmf(phi))
            draws = np.searchsorted(cdf, rng.random(int(mask.sum())), side="right")
            out[mask.reshape(phis.shape)] = np.minimum(draws, cdf.size - 1)
        return out


def partition_function(tables: EquilibriumTables, phi: float) -> float:
    """Z(phi) with certified relative tail below the tables' tolerance."""
    return tables.partition_function(phi)


def mean_occupation(tables: EquilibriumTables, phi: float) -> float:
    """R(phi) = phi Z'(phi) / Z(phi), the equilibrium mean occupation."""
    return tables.mean_occupation(phi)


def sample_site(tables: EquilibriumTables, phi: float, rng: np.random.Generator) -> int:
    """One occupancy drawn from the single-site law at fugacity phi."""
    return int(tables.sample_occupancies(np.array([phi]), rng)[0])


# ---------------------------------------------------------------------------
# Process model


@dataclass(eq=False)
class ZrpModel:
    """Bundle of the macroscopic flux model and the microscopic rate tables."""

    flux: FluxModel
    rate: RateFunction
    tables: EquilibriumTables

    @property
    def speed(self):
        return self.flux.speed

    @property
    def closure(self):
        return self.flux.closure

    @property
    def epsilon(self) -> float:
        return self.flux.epsilon

    def mollified(self, kernel: MollifierKernel) -> "ZrpModel":
        return ZrpModel(self.flux.mollified(kernel), self.rate, self.tables)


_TABLES_CACHE: dict = {}


def zrp_model(speed: SpeedField, rate="indicator", rho_max: float = 50.0,
              cap: int = 4000) -> ZrpModel:
    """Build a ZrpModel; builtin rate tags get their exact analytic closures."""
    if isinstance(rate, str):
        rate_fn = {"indicator": indicator_rate, "identity": identity_rate}[rate]()
    else:
        rate_fn = rate
    key = (rate_fn.tag if isinstance(rate, str) else id(rate_fn), cap, rho_max)
    tables = _TABLES_CACHE.get(key)
    if tables is None:
        tables = EquilibriumTables(rate_fn, cap=cap, rho_cap=rho_max)
        _TABLES_CACHE[key] = tables
    if rate_fn.tag == "indicator":
        closure = SaturatingClosure()
    elif rate_fn.tag == "identity":
        closure = LinearClosure()
    else:
        closure = SeriesClosure(tables)
    flux = FluxModel(speed=speed, closure=closure, rho_max=rho_max)
    return ZrpModel(flux=flux, rate=rate_fn, tables=tables)


# ---------------------------------------------------------------------------
# Product-measure samplers


@lru_cache(maxsize=128)
def _site_speeds(speed, n: int) -> np.ndarray:
    x = (np.arange(n, dtype=float)) / n
    lam = np.ascontiguousarray(np.asarray(speed(x), dtype=float))
    lam.flags.writeable = False
    return lam


def _profile_at_sites(rho_profile, n: int) -> np.ndarray:
    if callable(rho_profile):
        x = np.arange(n, dtype=float) / n
        rho = np.asarray(rho_profile(x), dtype=float)
        if rho.shape != (n,):
            rho = np.broadcast_to(rho, (n,)).astype(float)
    else:
        rho = np.asarray(rho_profile, dtype=float)
        if rho.shape != (n,):
            raise ValueError(f"profile array must have length {n}")
    return rho


def sample_product_measure(model: ZrpModel, rho_profile, n_sites: int,
                           rng: np.random.Generator) -> Configuration:
    """Independent sites with fugacity h(rho(u/N)), so E[eta(u)] = rho(u/N)."""
    rho = _profile_at_sites(rho_profile, n_sites)
    if np.any(rho < 0.0):
        bad = int(np.argmax(rho < 0.0))
        raise ClosureDomainError(f"negative density at site {bad}")
    try:
        phis = np.asarray(model.closure(rho), dtype=float)
    except ClosureDomainError as exc:
        raise ClosureDomainError(f"profile outside closure range: {exc}") from exc
    if np.any(phis > model.tables.phi_cap):
        bad = int(np.argmax(phis > model.tables.phi_cap))
        raise ClosureDomainError(
            f"density {rho[bad]!r} at site {bad} needs fugacity beyond the certified cap"
        )
    return Configuration(model.tables.sample_occupancies(phis, rng))


def sample_equilibrium(model: ZrpModel, alpha: float, n_sites: int,
                       rng: np.random.Generator) -> Configuration:
    """Invariant product measure at flux level alpha: fugacity alpha/lambda_eps(u/N)."""
    lam = _site_speeds(model.speed, n_sites)
    phis = alpha / lam
    if np.any(phis > model.tables.phi_cap):
        bad = int(np.argmax(phis > model.tables.phi_cap))
        raise ClosureDomainError(
            f"alpha={alpha!r} needs fugacity {phis[bad]!r} at site {bad}, "
            f"beyond the certified cap {model.tables.phi_cap!r}"
        )
    return Configuration(model.tables.sample_occupancies(phis, rng))


# ---------------------------------------------------------------------------
# Event-driven dynamics


@dataclass
class RunStats:
    """Bookkeeping from an event-driven run."""

    events: int = 0
    rate_total: float = 0.0
    rate_drift: float = 0.0
    last_dt: float = math.inf


class _ZrpEngine:
    """Per-run state: site speeds, rate table, Fenwick tree, running totals."""

    def __init__(self, cfg: Configuration, model: ZrpModel, kernel: JumpKernel):
        n = cfg.n_sites
        self.cfg = cfg
        self.lam = np.asarray(_site_speeds(model.speed, n))
        self.gtab = model.rate.table(cfg.total_particles + 1)
        self.kernel = kernel
        self.leaves = np.empty(n, dtype=float)
        self.tree = np.zeros(n + 1, dtype=float)
        self.total = _k.zrp_weights(cfg.occupancies, self.lam, self.gtab, self.leaves)
        _k.fw_build(self.tree, self.leaves)
        self.events_since_rebuild = 0

    def exact_total(self) -> float:
        scratch = np.empty_like(self.leaves)
        return _k.zrp_weights(self.cfg.occupancies, self.lam, self.gtab, scratch)


def _block_size(expected_events: float) -> int:
    return int(min(max(4096, 3.2 * expected_events + 64), 2 ** 21))


def gillespie_step(cfg: Configuration, model: ZrpModel, kernel: JumpKernel,
                   rng: np.random.Generator):
    """One exact event: waiting time ~ Exp(N * W), source ~ w(u)/W, jump u -> u+z.

    Returns ``(cfg, dt)``; a quiescent lattice (W = 0) returns dt = inf and the
    caller advances time to its horizon.
    """
    eng = _ZrpEngine(cfg, model, kernel)
    if eng.total <= 0.0:
        return cfg, math.inf
    u01 = rng.random(16)
    t, total, events, esr, used, status, last_dt = _k.zrp_run(
        cfg.occupancies, eng.lam, eng.gtab, eng.tree, eng.leaves, eng.total,
        kernel.displacements, kernel.cdf, float(cfg.n_sites),
        cfg.sim_time, math.inf, u01, 1, 10 ** 18, 0,
    )
    cfg.sim_time = t
    return cfg, last_dt


def _drive(cfg: Configuration, model: ZrpModel, kernel: JumpKernel, t_target: float,
           rng: np.random.Generator, max_events: int, rebuild_every: int):
    """Advance until t_target or the event budget; returns (RunStats, hit_budget)."""
    eng = _ZrpEngine(cfg, model, kernel)
    stats = RunStats(rate_total=eng.total)
    n = cfg.n_sites
    hit_budget = False
    if eng.total <= 0.0:
        if math.isfinite(t_target) and t_target > cfg.sim_time:
            cfg.sim_time = t_target
        return stats, hit_budget
    while cfg.sim_time < t_target:
        remaining = max_events - stats.events
        if remaining <= 0:
            hit_budget = True
            break
        expected = (t_target - cfg.sim_time) * n * max(eng.total, 1e-12)
        u01 = rng.random(_block_size(min(expected, float(remaining))))
        t, total, events, esr, used, status, last_dt = _k.zrp_run(
            cfg.occupancies, eng.lam, eng.gtab, eng.tree, eng.leaves, eng.total,
            kernel.displacements, kernel.cdf, float(n),
            cfg.sim_time, t_target, u01,
            remaining, rebuild_every, eng.events_since_rebuild,
        )
        cfg.sim_time = t
        eng.total = total
        eng.events_since_rebuild = esr
        stats.events += events
        stats.last_dt = last_dt
        if status == _k.STATUS_DONE:
            break
        if status == _k.STATUS_BUDGET:
            hit_budget = True
            break
        # STATUS_NEED_RANDOMS: refill and resume
    stats.rate_total = eng.total
    exact = eng.exact_total()
    stats.rate_drift = abs(eng.total - exact) / max(exact, 1e-300)
    return stats, hit_budget


def run_until_with_stats(cfg: Configuration, model: ZrpModel, kernel: JumpKernel,
                         t_target: float, rng: np.random.Generator,
                         max_events: int = 10 ** 9,
                         rebuild_every: int = 1_000_000):
    """run_until variant returning (Configuration, RunStats)."""
    if t_target < cfg.sim_time:
        raise ValueError("t_target must be >= the current sim_time")
    stats, hit_budget = _drive(cfg, model, kernel, t_target, rng, max_events, rebuild_every)
    if hit_budget:
        raise EventBudgetExceededError(cfg, stats.events, t_target)
    cfg.verify_particle_total()
    return cfg, stats


def run_until(cfg: Configuration, model: ZrpModel, kernel: JumpKernel, t_target: float,
              rng: np.random.Generator, max_events: int = 10 ** 9,
              rebuild_every: int = 1_000_000) -> Configuration:
    """Advance the configuration to t_target; particle count is invariant."""
    return run_until_with_stats(cfg, model, kernel, t_target, rng,
                                max_events, rebuild_every)[0]


def run_events(cfg: Configuration, model: ZrpModel, kernel: JumpKernel, n_events: int,
               rng: np.random.Generator, rebuild_every: int = 1_000_000):
    """Run exactly n_events (or until quiescent); returns (cfg, RunStats)."""
    stats, _ = _drive(cfg, model, kernel, math.inf, rng, n_events, rebuild_every)
    cfg.verify_particle_total()
    return cfg, stats


# ---------------------------------------------------------------------------
# Observables


def block_average(cfg: Configuration, u: int, l: int) -> float:
    """Mean occupancy over the (2l+1)-window centered at u, periodic."""
    n = cfg.n_sites
    if not 0 <= l < n / 2:
        raise ValueError("block radius must satisfy 0 <= l < N/2")
    idx = (np.arange(u - l, u + l + 1)) % n
    return float(cfg.occupancies[idx].mean())


def block_profile_array(occ: np.ndarray, l: int) -> np.ndarray:
    """Periodic (2l+1)-window averages of a raw occupancy array."""
    n = occ.size
    if not 0 <= l < n / 2:
        raise ValueError("block radius must satisfy 0 <= l < N/2")
    if l == 0:
        return occ.astype(float)
    padded = np.concatenate([occ[-l:], occ, occ[:l]])
    csum = np.concatenate([[0], np.cumsum(padded)])
    width = 2 * l + 1
    return (csum[width:] - csum[:-width]) / width


def block_average_profile(cfg: Configuration, l: int) -> np.ndarray:
    """Block averages at every site via a wrapped cumulative sum."""
    return block_profile_array(cfg.occupancies, l)


def empirical_pairing(cfg: Configuration, J) -> float:
    """<chi^N, J> = N^{-1} sum_u J(u/N) eta(u)."""
    n = cfg.n_sites
    x = np.arange(n, dtype=float) / n
    return float(np.dot(np.asarray(J(x), dtype=float), cfg.occupancies) / n)
