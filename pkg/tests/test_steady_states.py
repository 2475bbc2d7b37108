import numpy as np
import pytest

from discoflux import (
    FluxModel,
    Grid1D,
    MollifierKernel,
    ParabolicClosure,
    SteadyStateFamily,
    SteadyStateInfeasibleError,
    constant_speed,
    envelope_alpha,
    eval_flux,
    solve_steady,
    steady_at,
    steady_profile,
    step_speed,
)


def _bisect_oracle(model, alpha, x, lo=0.0, hi=50.0, iters=200):
    """Independent oracle: plain bisection on F(x, .) - alpha."""
    f_lo = eval_flux(model, x, lo) - alpha
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        f_mid = eval_flux(model, x, mid) - alpha
        if f_lo * f_mid <= 0.0:
            hi = mid
        else:
            lo, f_lo = mid, f_mid
    return 0.5 * (lo + hi)


def test_solve_steady_fixture_values(fixture_model):
    m = fixture_model.flux
    # phi = alpha/lambda = 0.25 -> m = phi/(1-phi) = 1/3 ; phi = 0.5 -> m = 1
    assert solve_steady(m, 0.5, 0.25) == pytest.approx(1.0 / 3.0, abs=1e-10)
    assert solve_steady(m, 0.5, 0.75) == pytest.approx(1.0, abs=1e-10)
    for x in (0.25, 0.75):
        assert solve_steady(m, 0.5, x) == pytest.approx(
            _bisect_oracle(m, 0.5, x), abs=1e-9)


def test_solve_steady_residual_tolerance(fixture_model):
    m = fixture_model.flux
    for alpha in (0.05, 0.3, 0.7):
        for x in (0.1, 0.5, 0.9):
            val = solve_steady(m, alpha, x)
            assert abs(eval_flux(m, x, val) - alpha) <= 1e-10 * max(1.0, alpha)


def test_solve_steady_infeasible(fixture_model):
    m = fixture_model.flux
    # on the slow region sup F = 1 * h(rho_max) < 1
    with pytest.raises(SteadyStateInfeasibleError) as err:
        solve_steady(m, 1.5, 0.75)
    assert err.value.x == 0.75
    lo, hi = err.value.attainable
    assert lo == 0.0 and hi < 1.0


def test_convex_case_branches():
    model = FluxModel(constant_speed(2.0), ParabolicClosure())
    # F = 2 rho^2 = 8 -> rho = +-2
    assert solve_steady(model, 8.0, 0.3, "plus") == pytest.approx(2.0, abs=1e-10)
    assert solve_steady(model, 8.0, 0.3, "minus") == pytest.approx(-2.0, abs=1e-10)
    # at the extremal level both branches collapse onto rho_m
    assert solve_steady(model, 0.0, 0.3, "plus") == pytest.approx(0.0, abs=1e-12)
    assert solve_steady(model, 0.0, 0.3, "minus") == pytest.approx(0.0, abs=1e-12)


def test_steady_profile_constant_speed(identity_model):
    grid = Grid1D(32)
    prof = steady_profile(identity_model.flux, 0.8, grid)
    assert np.max(np.abs(prof - 0.8)) < 1e-12   # h^{-1}(alpha/lambda) = 0.8 / 1


def test_steady_profile_two_values(fixture_model):
    grid = Grid1D(64)
    prof = steady_profile(fixture_model.flux, 0.5, grid)
    assert set(np.round(prof, 10).tolist()) == {round(1.0 / 3.0, 10), 1.0}
    assert not prof.flags.writeable


def test_steady_profile_cell_index_in_error(fixture_model):
    with pytest.raises(SteadyStateInfeasibleError) as err:
        steady_at(fixture_model.flux, 1.5, np.array([0.25, 0.75]))
    assert err.value.cell == 1


def test_flux_constancy_across_discontinuity(fixture_model):
    grid = Grid1D(128)
    for alpha in (0.1, 0.5, 0.9):
        prof = steady_profile(fixture_model.flux, alpha, grid)
        flux = eval_flux(fixture_model.flux, grid.centers, prof)
        assert np.max(np.abs(flux - alpha)) <= 1e-10


def test_monotone_in_alpha(fixture_model):
    grid = Grid1D(32)
    prev = steady_profile(fixture_model.flux, 0.1, grid)
    for alpha in (0.3, 0.5, 0.7):
        cur = steady_profile(fixture_model.flux, alpha, grid)
        assert np.all(cur >= prev - 1e-12)
        prev = cur


def test_mollified_steady_converges(fixture_model):
    xs = np.array([0.1, 0.3, 0.45, 0.6, 0.9])   # off the breakpoints
    exact = steady_at(fixture_model.flux, 0.5, xs)
    prev = None
    for eps in (0.2, 0.1, 0.05, 0.02):
        m_eps = fixture_model.flux.mollified(MollifierKernel(eps))
        diff = float(np.max(np.abs(steady_at(m_eps, 0.5, xs) - exact)))
        if prev is not None:
            assert diff <= prev + 1e-14
        prev = diff
    assert prev < 1e-10   # eps below every distance-to-breakpoint: exact


def test_family_wrapper(fixture_model):
    fam = SteadyStateFamily(fixture_model.flux, 0.5)
    assert fam(0.25) == pytest.approx(1.0 / 3.0, abs=1e-10)
    assert fam.residual(np.array([0.2, 0.8])) <= 1e-10
    assert fam.valid_at(0.25)
    assert not SteadyStateFamily(fixture_model.flux, 1.5).valid_at(0.75)


# ---------------------------------------------------------------------------
# Envelope levels


def test_envelope_zero_profile(fixture_model):
    assert envelope_alpha(fixture_model.flux, lambda x: np.zeros_like(x)) == 0.0


def test_envelope_unit_profile(fixture_model):
    """Oracle: dense alpha-scan checking domination in fugacity space."""
    alpha = envelope_alpha(fixture_model.flux, lambda x: np.ones_like(x))
    assert alpha == pytest.approx(1.0, abs=1e-12)
    xs = (np.arange(512) + 0.5) / 512
    lam = fixture_model.flux.speed(xs)
    h1 = 0.5   # h(1) for the saturating closure
    scan = np.linspace(0.0, 2.0, 2001)
    feasible = [a for a in scan if np.all(a / lam >= h1)]
    assert alpha == pytest.approx(min(feasible), abs=1e-3)


def test_envelope_of_steady_profile_is_its_level(fixture_model):
    grid = Grid1D(256)
    beta = 0.45
    prof = steady_profile(fixture_model.flux, beta, grid)
    alpha = envelope_alpha(fixture_model.flux, (grid.centers, prof))
    assert alpha == pytest.approx(beta, rel=1e-9)


def test_envelope_domination_when_attainable(fixture_model):
    grid = Grid1D(128)
    rho0 = 0.2 + 0.1 * np.sin(2 * np.pi * grid.centers)
    alpha = envelope_alpha(fixture_model.flux, (grid.centers, rho0))
    m = steady_at(fixture_model.flux, alpha * (1 + 1e-12), grid.centers)
    assert np.all(m >= rho0 - 1e-9)
