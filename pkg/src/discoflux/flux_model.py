"""Flux models of product form F(x, rho) = lambda(x) * h(rho).

The speed field lambda is piecewise smooth on the periodic unit interval with
a finite set of breakpoints; h is the macroscopic closure (for zero-range
dynamics the inverse of the mean-occupation map R).  Mollified speed fields
smooth lambda by convolution with a compactly supported bump kernel.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import ClosureDomainError

__all__ = [
    "SpeedField",
    "MollifiedSpeedField",
    "MollifierKernel",
    "RateFunction",
    "indicator_rate",
    "identity_rate",
    "table_rate",
    "Closure",
    "LinearClosure",
    "SaturatingClosure",
    "ParabolicClosure",
    "SeriesClosure",
    "FluxModel",
    "eval_flux",
    "mollified_speed",
    "closure_from_rate",
    "step_speed",
    "constant_speed",
]


# ---------------------------------------------------------------------------
# Speed fields


@dataclass(frozen=True, eq=False)
class SpeedField:
    """Piecewise evaluator for lambda on the torus [0, 1).

    ``pieces[j]`` covers ``[breakpoints[j], breakpoints[j+1])`` (the last piece
    wraps to 1); a piece is either a float (constant) or a vectorized callable.
    The value at a breakpoint is the right limit.
    """

    breakpoints: tuple
    pieces: tuple
    lambda_lo: float
    lambda_hi: float
    tag: str = "speed"

    def __post_init__(self):
        if len(self.breakpoints) != len(self.pieces):
            raise ValueError("one piece per breakpoint interval required")
        if len(self.breakpoints) == 0:
            raise ValueError("at least one piece required")
        if self.breakpoints[0] != 0.0:
            raise ValueError("breakpoints must start at 0.0 (prepend the wrapping piece)")
        bp = list(self.breakpoints)
        if any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])) or bp[-1] >= 1.0:
            raise ValueError("breakpoints must be strictly increasing within [0, 1)")
        if not (0.0 < self.lambda_lo <= self.lambda_hi < math.inf):
            raise ValueError("speed bounds must satisfy 0 < lambda_lo <= lambda_hi < inf")

    @property
    def is_smooth(self) -> bool:
        return len(self.breakpoints) == 1 and not callable(self.pieces[0])

    def piece_index(self, x: float) -> int:
        x = x % 1.0
        return bisect.bisect_right(self.breakpoints, x) - 1

    def __call__(self, x):
        if np.ndim(x) == 0:
            j = self.piece_index(float(x))
            piece = self.pieces[j]
            return float(piece(float(x) % 1.0)) if callable(piece) else float(piece)
        x = np.asarray(x, dtype=float) % 1.0
        out = np.empty_like(x)
        idx = np.searchsorted(self.breakpoints, x, side="right") - 1
        for j, piece in enumerate(self.pieces):
            mask = idx == j
            if not mask.any():
                continue
            out[mask] = piece(x[mask]) if callable(piece) else piece
        return out


def step_speed(values: Sequence[float], breakpoints: Sequence[float], tag: str = "") -> SpeedField:
    """Piecewise-constant speed field; ``values[j]`` holds on ``[breakpoints[j], breakpoints[j+1])``."""
    vals = tuple(float(v) for v in values)
    return SpeedField(
        breakpoints=tuple(float(b) for b in breakpoints),
        pieces=vals,
        lambda_lo=min(vals),
        lambda_hi=max(vals),
        tag=tag or "step:" + ",".join(f"{v:g}@{b:g}" for v, b in zip(values, breakpoints)),
    )


def constant_speed(value: float) -> SpeedField:
    return step_speed([value], [0.0], tag=f"const:{value:g}")


# ---------------------------------------------------------------------------
# Mollification


def _bump_unnormalized(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    si = s[inside]
    out[inside] = np.exp(-1.0 / (1.0 - si * si))
    return out


_GL512_NODES, _GL512_WEIGHTS = leggauss(512)
_BUMP_MASS = float(np.sum(_GL512_WEIGHTS * _bump_unnormalized(_GL512_NODES)))

_GL64_NODES, _GL64_WEIGHTS = leggauss(64)


@dataclass(frozen=True, eq=False)
class MollifierKernel:
    """Smooth bump supported in [-1, 1] with unit mass, scaled to width epsilon.

    theta_eps(z) = theta(z / eps) / eps.  A 512-node Gauss-Legendre rule on the
    reference support is tabulated once per kernel for mass bookkeeping.
    """

    epsilon: float
    nodes: np.ndarray = field(default=None, repr=False)
    weights: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be positive")
        if self.nodes is None:
            nodes, weights = leggauss(512)
            object.__setattr__(self, "nodes", nodes)
            object.__setattr__(self, "weights", weights)

    def theta(self, s):
        """Normalized reference bump on [-1, 1]."""
        return _bump_unnormalized(s) / _BUMP_MASS

    def theta_eps(self, z):
        return self.theta(np.asarray(z, dtype=float) / self.epsilon) / self.epsilon

    def mass(self) -> float:
        """Quadrature mass of theta_eps over its support (should be 1)."""
        return float(np.sum(self.weights * self.theta(self.nodes)))


def _support_splits(speed: SpeedField, x: float, eps: float) -> list:
    """Reference coordinates s in (-1, 1) where x - eps*s crosses a breakpoint."""
    splits = []
    for b in speed.breakpoints:
        for k in (-1.0, 0.0, 1.0):
            s = (x - (b + k)) / eps
            if -1.0 < s < 1.0:
                splits.append(s)
    return sorted(splits)


def mollified_speed(speed: SpeedField, kernel: MollifierKernel, x: float) -> float:
    """(lambda * theta_eps)(x) on the torus, exact on constant neighborhoods.

    The kernel support is split at breakpoint preimages and each smooth
    subinterval integrated with a mapped Gauss-Legendre rule, so the result is
    accurate to quadrature precision (well under 1e-8 relative).
    """
    x = float(x) % 1.0
    eps = kernel.epsilon
    splits = _support_splits(speed, x, eps)
    edges = [-1.0] + splits + [1.0]
    # Short-circuit: support covered by a single constant piece.
    mids = [(a + b) / 2.0 for a, b in zip(edges, edges[1:])]
    piece_ids = {speed.piece_index(x - eps * s) for s in mids}
    if len(piece_ids) == 1:
        piece = speed.pieces[piece_ids.pop()]
        if not callable(piece):
            return float(piece)
    total = 0.0
    for a, b in zip(edges, edges[1:]):
        half = 0.5 * (b - a)
        s = 0.5 * (a + b) + half * _GL64_NODES
        y = (x - eps * s) % 1.0
        total += half * float(np.sum(_GL64_WEIGHTS * _bump_unnormalized(s) * speed(y)))
    return total / _BUMP_MASS


@dataclass(frozen=True, eq=False)
class MollifiedSpeedField:
    """Speed field smoothed by a mollifier kernel; duck-types SpeedField."""

    base: SpeedField
    kernel: MollifierKernel
    tag: str = ""

    def __post_init__(self):
        if not self.tag:
            object.__setattr__(self, "tag", f"{self.base.tag}|eps={self.kernel.epsilon:g}")

    @property
    def breakpoints(self) -> tuple:
        return (0.0,)

    @property
    def epsilon(self) -> float:
        return self.kernel.epsilon

    @property
    def lambda_lo(self) -> float:
        return self.base.lambda_lo

    @property
    def lambda_hi(self) -> float:
        return self.base.lambda_hi

    @property
    def is_smooth(self) -> bool:
        return True

    def __call__(self, x):
        if np.ndim(x) == 0:
            return mollified_speed(self.base, self.kernel, float(x))
        x = np.asarray(x, dtype=float)
        return np.array([mollified_speed(self.base, self.kernel, xi) for xi in x.ravel()]).reshape(x.shape)


# ---------------------------------------------------------------------------
# Microscopic rate functions


@dataclass(frozen=True, eq=False)
class RateFunction:
    """Jump rate g(k) of the zero range dynamics: g(0)=0, nondecreasing, g(k)>0 for k>=1."""

    tag: str
    func: Callable[[np.ndarray], np.ndarray]

    def __call__(self, k):
        if np.ndim(k) == 0:
            return float(self.func(np.asarray([k], dtype=np.int64))[0])
        return self.func(np.asarray(k, dtype=np.int64))

    def table(self, n_max: int) -> np.ndarray:
        """g(0..n_max) as a float array (lookup table for the event kernels)."""
        return np.asarray(self(np.arange(n_max + 1)), dtype=float)

    def validate(self, n_check: int = 4096) -> None:
        tab = self.table(n_check)
        if tab[0] != 0.0:
            raise ValueError("g(0) must be 0")
        if np.any(np.diff(tab) < 0.0):
            raise ValueError("g must be nondecreasing")
        if np.any(tab[1:] <= 0.0):
            raise ValueError("g(k) must be positive for k >= 1")

    def subquadratic_at(self, cap: int) -> bool:
        """g(K)/K^2 < 1e-3 at the truncation cap (sub-quadratic growth check)."""
        return float(self(cap)) / cap**2 < 1e-3


def indicator_rate() -> RateFunction:
    return RateFunction("indicator", lambda k: (k >= 1).astype(float))


def identity_rate() -> RateFunction:
    return RateFunction("identity", lambda k: k.astype(float))


def table_rate(values: Sequence[float], tag: str = "table") -> RateFunction:
    """Rate from a user table g(1..m) with monotone completion.

    The table is made nondecreasing by a running maximum; beyond the table the
    rate continues linearly with slope g(m)/m so that g grows unboundedly while
    staying sub-quadratic.
    """
    vals = np.maximum.accumulate(np.asarray(values, dtype=float))
    if vals.size == 0 or vals[0] <= 0.0:
        raise ValueError("table must start with g(1) > 0")
    m = vals.size
    slope = vals[-1] / m

    def func(k):
        k = np.asarray(k, dtype=np.int64)
        out = np.zeros(k.shape, dtype=float)
        small = (k >= 1) & (k <= m)
        out[small] = vals[k[small] - 1]
        big = k > m
        out[big] = vals[-1] + (k[big] - m) * slope
        return out

    return RateFunction(tag, func)


# ---------------------------------------------------------------------------
# Closures


class Closure:
    """Monotone (or unimodal) evaluator rho -> h(rho) with inverse and derivative."""

    name = "closure"
    increasing = True
    concave = None   # True / False / None (unknown)
    linear = False
    rho_m = None     # extremum location in the non-monotone case
    domain = (0.0, math.inf)
    sup_value = math.inf

    def __call__(self, rho):
        raise NotImplementedError

    def inverse(self, value, branch: str = "plus"):
        raise NotImplementedError

    def derivative(self, rho):
        raise NotImplementedError

    def check_domain(self, rho) -> None:
        lo, hi = self.domain
        r = np.asarray(rho, dtype=float)
        if np.any(r < lo) or np.any(r > hi):
            raise ClosureDomainError(
                f"density outside closure domain [{lo!r}, {hi!r}] for {self.name}"
            )


class LinearClosure(Closure):
    """h(rho) = rho (identity rate); fugacity equals density."""

    name = "linear"
    increasing = True
    concave = True
    linear = True
    domain = (0.0, math.inf)
    sup_value = math.inf

    def __call__(self, rho):
        self.check_domain(rho)
        return np.asarray(rho, dtype=float) if np.ndim(rho) else float(rho)

    def inverse(self, value, branch: str = "plus"):
        return np.asarray(value, dtype=float) if np.ndim(value) else float(value)

    def derivative(self, rho):
        return np.ones_like(np.asarray(rho, dtype=float)) if np.ndim(rho) else 1.0


class SaturatingClosure(Closure):
    """h(rho) = rho / (1 + rho) (indicator rate); concave, saturates at 1."""

    name = "saturating"
    increasing = True
    concave = True
    domain = (0.0, math.inf)
    sup_value = 1.0

    def __call__(self, rho):
        self.check_domain(rho)
        r = np.asarray(rho, dtype=float)
        out = r / (1.0 + r)
        return out if np.ndim(rho) else float(out)

    def inverse(self, value, branch: str = "plus"):
        v = np.asarray(value, dtype=float)
        if np.any(v >= 1.0) or np.any(v < 0.0):
            raise ClosureDomainError("fugacity outside [0, 1) for the saturating closure")
        out = v / (1.0 - v)
        return out if np.ndim(value) else float(out)

    def derivative(self, rho):
        r = np.asarray(rho, dtype=float)
        out = 1.0 / (1.0 + r) ** 2
        return out if np.ndim(rho) else float(out)


class ParabolicClosure(Closure):
    """h(rho) = rho^2: the convex (H3-type) closure with extremum at rho_m = 0."""

    name = "parabolic"
    increasing = False
    concave = False
    rho_m = 0.0
    domain = (-math.inf, math.inf)
    sup_value = math.inf

    def __call__(self, rho):
        r = np.asarray(rho, dtype=float)
        out = r * r
        return out if np.ndim(rho) else float(out)

    def inverse(self, value, branch: str = "plus"):
        v = np.asarray(value, dtype=float)
        if np.any(v < 0.0):
            raise ClosureDomainError("parabolic closure takes no negative values")
        root = np.sqrt(v)
        out = root if branch == "plus" else -root
        return out if np.ndim(value) else float(out)

    def derivative(self, rho):
        r = np.asarray(rho, dtype=float)
        out = 2.0 * r
        return out if np.ndim(rho) else float(out)


class SeriesClosure(Closure):
    """h = R^{-1} from truncated partition-function series of a rate g.

    Evaluation interpolates a dense monotone (phi, R) table and polishes with
    Newton steps using the exact series derivative, giving ~1e-12 accuracy on
    the tabulated range.
    """

    increasing = True

    def __init__(self, tables, grid_size: int = 4096):
        # local import: zrp_core owns the partition-function machinery
        self.tables = tables
        self.name = f"series[{tables.g.tag}]"
        self.concave = True if tables.g.tag == "indicator" else None
        self.linear = tables.g.tag == "identity"
        phi_hi = tables.phi_cap
        grid = np.linspace(0.0, phi_hi, grid_size)
        self._phi_grid = grid
        self._rho_grid = np.array([tables.mean_occupation(p) for p in grid])
        self.domain = (0.0, float(self._rho_grid[-1]))
        self.sup_value = float(phi_hi)

    def __call__(self, rho):
        scalar = np.ndim(rho) == 0
        r = np.atleast_1d(np.asarray(rho, dtype=float))
        self.check_domain(r)
        phi = np.interp(r, self._rho_grid, self._phi_grid)
        for _ in range(3):
            R, dR = self.tables.mean_occupation_with_derivative(phi)
            step = (R - r) / np.where(dR > 0.0, dR, 1.0)
            phi = np.clip(phi - step, 0.0, self.tables.phi_cap)
        return float(phi[0]) if scalar else phi

    def inverse(self, value, branch: str = "plus"):
        scalar = np.ndim(value) == 0
        v = np.atleast_1d(np.asarray(value, dtype=float))
        if np.any(v < 0.0) or np.any(v > self.tables.phi_cap):
            raise ClosureDomainError(
                f"fugacity outside [0, {self.tables.phi_cap!r}] for {self.name}"
            )
        out = np.array([self.tables.mean_occupation(p) for p in v])
        return float(out[0]) if scalar else out

    def derivative(self, rho):
        scalar = np.ndim(rho) == 0
        phi = np.atleast_1d(self(rho))
        _, dR = self.tables.mean_occupation_with_derivative(phi)
        out = 1.0 / dR
        return float(out[0]) if scalar else out


def closure_from_rate(g: RateFunction, cap: int = 4000) -> SeriesClosure:
    """Build the macroscopic closure h = R^{-1} from the rate g via series tables."""
    from .zrp_core import EquilibriumTables

    return SeriesClosure(EquilibriumTables(g, cap=cap))


# ---------------------------------------------------------------------------
# Flux model


@dataclass(frozen=True, eq=False)
class FluxModel:
    """F(x, rho) = lambda(x) h(rho) with closure metadata and a density cap."""

    speed: object           # SpeedField or MollifiedSpeedField
    closure: Closure
    rho_max: float = 50.0
    envelopes: dict = None  # optional (H2)-style growth metadata, unused computationally

    @property
    def m0(self) -> float:
        """Extremal flux level; requires h to vanish at its anchor so that
        F(x, anchor) is x-independent."""
        anchor = self.closure.rho_m if self.closure.rho_m is not None else max(self.closure.domain[0], 0.0)
        h0 = float(self.closure(anchor))
        if abs(h0) > 1e-12:
            raise ValueError("closure does not vanish at its anchor; no uniform extremal flux level")
        return 0.0

    @property
    def epsilon(self) -> float:
        return getattr(self.speed, "epsilon", 0.0)

    @property
    def tag(self) -> str:
        return f"{self.speed.tag}|{self.closure.name}"

    def mollified(self, kernel: MollifierKernel) -> "FluxModel":
        base = self.speed.base if isinstance(self.speed, MollifiedSpeedField) else self.speed
        return FluxModel(
            speed=MollifiedSpeedField(base, kernel),
            closure=self.closure,
            rho_max=self.rho_max,
            envelopes=self.envelopes,
        )


def eval_flux(model: FluxModel, x, rho):
    """lambda(x) * h(rho); at a breakpoint the right-limit speed is used."""
    model.closure.check_domain(rho)
    lam = model.speed(x)
    h = model.closure(rho)
    out = np.asarray(lam) * np.asarray(h)
    return float(out) if np.ndim(out) == 0 else out
