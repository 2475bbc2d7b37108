import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from discoflux import (
    ClosureDomainError,
    FluxModel,
    LinearClosure,
    MollifierKernel,
    ParabolicClosure,
    SaturatingClosure,
    closure_from_rate,
    constant_speed,
    eval_flux,
    identity_rate,
    indicator_rate,
    mollified_speed,
    step_speed,
    table_rate,
    zrp_model,
)

positions = st.floats(min_value=0.0, max_value=0.999999, allow_nan=False)


# ---------------------------------------------------------------------------
# Speed fields


def test_step_speed_right_limit_convention(fixture_speed):
    assert fixture_speed(0.25) == 2.0
    assert fixture_speed(0.75) == 1.0
    # at a breakpoint the right limit wins
    assert fixture_speed(0.5) == 1.0
    assert fixture_speed(0.0) == 2.0


def test_speed_field_wraps_periodically(fixture_speed):
    assert fixture_speed(1.25) == fixture_speed(0.25)
    assert fixture_speed(-0.25) == fixture_speed(0.75)


@settings(max_examples=50, deadline=None)
@given(st.lists(positions, min_size=1, max_size=16))
def test_speed_vector_matches_scalar(xs):
    speed = step_speed([2.0, 1.0], [0.0, 0.5])
    arr = np.asarray(speed(np.array(xs)))
    for x, v in zip(xs, arr):
        assert speed(x) == v


def test_speed_field_validation():
    with pytest.raises(ValueError):
        step_speed([1.0], [0.5])          # must start at 0
    with pytest.raises(ValueError):
        step_speed([1.0, 2.0], [0.0, 1.5])  # breakpoint outside [0, 1)
    with pytest.raises(ValueError):
        step_speed([0.0, 1.0], [0.0, 0.5])  # lambda_lo must be positive


def test_smooth_piece_speed_field():
    speed = step_speed([1.0], [0.0])
    smooth = type(speed)(
        breakpoints=(0.0,),
        pieces=(lambda x: 1.5 + 0.25 * np.sin(2 * np.pi * np.asarray(x)),),
        lambda_lo=1.25,
        lambda_hi=1.75,
        tag="sine",
    )
    assert smooth(0.25) == pytest.approx(1.75)
    assert smooth(0.75) == pytest.approx(1.25)


# ---------------------------------------------------------------------------
# Mollifier kernels and mollified speeds


def test_kernel_mass_is_one():
    for eps in (1e-3, 1e-2, 0.2):
        assert MollifierKernel(eps).mass() == pytest.approx(1.0, abs=1e-10)


def test_kernel_support():
    kern = MollifierKernel(0.05)
    assert kern.theta_eps(0.051) == 0.0
    assert kern.theta_eps(-0.06) == 0.0
    assert kern.theta_eps(0.0) > 0.0


def test_kernel_requires_positive_epsilon():
    with pytest.raises(ValueError):
        MollifierKernel(0.0)


def test_mollified_constant_is_exact():
    speed = constant_speed(1.7)
    kern = MollifierKernel(0.03)
    for x in (0.0, 0.01, 0.5, 0.99):
        assert mollified_speed(speed, kern, x) == 1.7


def test_mollified_step_midpoint_half_mass(fixture_speed):
    # symmetric kernel at the jump: half mass sees each side -> (2 + 1) / 2
    kern = MollifierKernel(1e-2)
    assert mollified_speed(fixture_speed, kern, 0.5) == pytest.approx(1.5, abs=1e-10)


def test_mollified_matches_quadrature_oracle(fixture_speed):
    """Independent oracle: scipy quadrature of the convolution integral."""
    eps = 1e-2
    kern = MollifierKernel(eps)

    def theta(z):
        if abs(z) >= 1.0:
            return 0.0
        return math.exp(-1.0 / (1.0 - z * z))

    norm = quad(theta, -1.0, 1.0, epsabs=1e-13)[0]
    for x in (0.495, 0.5, 0.502, 0.508):
        expected = sum(
            quad(lambda s: theta(s) * fixture_speed(x - eps * s), a, b,
                 epsabs=1e-13, limit=200)[0]
            for a, b in [(-1.0, (x - 0.5) / eps), ((x - 0.5) / eps, 1.0)]
        ) / norm
        assert mollified_speed(fixture_speed, kern, x) == pytest.approx(expected, abs=1e-8)


def test_mollified_exact_outside_support(fixture_speed):
    kern = MollifierKernel(0.02)
    assert mollified_speed(fixture_speed, kern, 0.25) == 2.0
    assert mollified_speed(fixture_speed, kern, 0.75) == 1.0
    assert mollified_speed(fixture_speed, kern, 0.5 + 0.0201) == 1.0


@settings(max_examples=30, deadline=None)
@given(positions, st.floats(min_value=1e-3, max_value=0.2))
def test_mollified_within_speed_bounds(x, eps):
    speed = step_speed([2.0, 1.0], [0.0, 0.5])
    val = mollified_speed(speed, MollifierKernel(eps), x)
    assert 1.0 - 1e-12 <= val <= 2.0 + 1e-12


def test_mollified_converges_pointwise_off_breakpoints(fixture_speed):
    xs = [0.1, 0.3, 0.45, 0.6, 0.9]
    prev = None
    for eps in (0.2, 0.1, 0.05, 0.02):
        kern = MollifierKernel(eps)
        diff = max(abs(mollified_speed(fixture_speed, kern, x) - fixture_speed(x))
                   for x in xs)
        if prev is not None:
            assert diff <= prev + 1e-14
        prev = diff
    # once eps < distance to the nearest breakpoint, equality is exact
    kern = MollifierKernel(0.02)
    assert mollified_speed(fixture_speed, kern, 0.3) == fixture_speed(0.3)


def test_mollified_speed_field_wrapper(fixture_speed):
    field = zrp_model(fixture_speed, "indicator").mollified(MollifierKernel(0.05)).speed
    xs = np.array([0.1, 0.5, 0.9])
    vals = field(xs)
    for x, v in zip(xs, vals):
        assert v == mollified_speed(fixture_speed, field.kernel, x)
    assert field.epsilon == 0.05
    assert field.lambda_lo == 1.0 and field.lambda_hi == 2.0


# ---------------------------------------------------------------------------
# Rate functions


def test_builtin_rates():
    g_ind = indicator_rate()
    assert g_ind(0) == 0.0 and g_ind(1) == 1.0 and g_ind(7) == 1.0
    g_id = identity_rate()
    assert g_id(0) == 0.0 and g_id(5) == 5.0
    g_ind.validate()
    g_id.validate()


def test_table_rate_monotone_completion():
    g = table_rate([1.0, 0.5, 2.0])     # dips are lifted by the running max
    assert g(1) == 1.0
    assert g(2) == 1.0
    assert g(3) == 2.0
    # beyond the table: linear continuation with slope g(m)/m
    assert g(6) == pytest.approx(2.0 + 3 * (2.0 / 3.0))
    g.validate()
    diffs = np.diff(g.table(200))
    assert np.all(diffs >= 0.0)


def test_table_rate_rejects_bad_start():
    with pytest.raises(ValueError):
        table_rate([0.0, 1.0])
    with pytest.raises(ValueError):
        table_rate([])


def test_subquadratic_growth_check():
    assert indicator_rate().subquadratic_at(4000)
    assert identity_rate().subquadratic_at(4000)
    assert not identity_rate().subquadratic_at(100)   # 100/100^2 = 1e-2 >= 1e-3


# ---------------------------------------------------------------------------
# Closures


@pytest.mark.parametrize("closure,rhos", [
    (LinearClosure(), np.linspace(0.0, 40.0, 17)),
    (SaturatingClosure(), np.linspace(0.0, 40.0, 17)),
])
def test_inverse_roundtrip(closure, rhos):
    values = np.asarray(closure(rhos))
    back = np.asarray(closure.inverse(values))
    assert np.max(np.abs(back - rhos)) < 1e-9


def test_parabolic_branches():
    c = ParabolicClosure()
    assert c(3.0) == 9.0 and c(-3.0) == 9.0
    assert c.inverse(9.0, "plus") == 3.0
    assert c.inverse(9.0, "minus") == -3.0
    with pytest.raises(ClosureDomainError):
        c.inverse(-1.0)


def test_closure_derivatives_match_finite_differences():
    h = 1e-6
    for closure, rho in [(LinearClosure(), 2.0), (SaturatingClosure(), 1.3),
                         (ParabolicClosure(), -0.7)]:
        fd = (closure(rho + h) - closure(rho - h)) / (2 * h)
        assert closure.derivative(rho) == pytest.approx(fd, rel=1e-6, abs=1e-8)


def _series_mean_occupation(gfact_ratio, phi, n_terms=6000):
    """Oracle: R(phi) from the truncated series, independent implementation."""
    t, z, s = 1.0, 1.0, 0.0
    for n in range(1, n_terms):
        t *= phi / gfact_ratio(n)
        z += t
        s += n * t
    return s / z


def test_closure_from_rate_identity():
    h = closure_from_rate(identity_rate())
    # oracle: Poisson weights give R(phi) = phi, so h(2) = 2
    oracle = _series_mean_occupation(lambda n: float(n), 2.0)
    assert oracle == pytest.approx(2.0, abs=1e-12)
    assert h(2.0) == pytest.approx(2.0, abs=1e-9)
    assert h(0.0) == 0.0


def test_closure_from_rate_indicator():
    h = closure_from_rate(indicator_rate())
    # oracle: geometric weights give R(phi) = phi / (1 - phi), so h(1) = 0.5
    oracle = _series_mean_occupation(lambda n: 1.0, 0.5)
    assert oracle == pytest.approx(1.0, abs=1e-10)
    assert h(1.0) == pytest.approx(0.5, abs=1e-9)
    assert h(0.0) == 0.0
    analytic = SaturatingClosure()
    rhos = np.linspace(0.0, 30.0, 13)
    assert np.max(np.abs(np.asarray(h(rhos)) - np.asarray(analytic(rhos)))) < 1e-8


def test_closure_from_rate_range_error():
    h = closure_from_rate(indicator_rate())
    with pytest.raises(ClosureDomainError):
        h(1e6)


def test_series_closure_roundtrip_and_derivative():
    h = closure_from_rate(indicator_rate())
    rhos = np.linspace(0.1, 20.0, 9)
    back = np.asarray(h.inverse(np.asarray(h(rhos))))
    assert np.max(np.abs(back - rhos)) < 1e-9
    fd = (h(1.0 + 1e-6) - h(1.0 - 1e-6)) / 2e-6
    assert h.derivative(1.0) == pytest.approx(fd, rel=1e-5)


# ---------------------------------------------------------------------------
# eval_flux


def test_eval_flux_identity_closure():
    model = FluxModel(constant_speed(1.0), LinearClosure())
    assert eval_flux(model, 0.3, 2.0) == 2.0


def test_eval_flux_fixture_values(fixture_model):
    # lambda(0.25) = 2, h(1) = 1/2 -> 1.0 ; lambda(0.75) = 1 -> 0.5
    assert eval_flux(fixture_model.flux, 0.25, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert eval_flux(fixture_model.flux, 0.75, 1.0) == pytest.approx(0.5, abs=1e-15)


def test_eval_flux_rejects_negative_density(fixture_model):
    with pytest.raises(ClosureDomainError):
        eval_flux(fixture_model.flux, 0.25, -0.5)


@settings(max_examples=30, deadline=None)
@given(positions, st.floats(min_value=0.0, max_value=19.0), st.floats(min_value=0.01, max_value=1.0))
def test_eval_flux_monotone_in_density(x, rho, drho):
    model = FluxModel(step_speed([2.0, 1.0], [0.0, 0.5]), SaturatingClosure())
    assert eval_flux(model, x, rho + drho) > eval_flux(model, x, rho)


def test_m0_is_zero_for_vanishing_closures(fixture_model):
    assert fixture_model.flux.m0 == 0.0
    assert FluxModel(constant_speed(2.0), ParabolicClosure()).m0 == 0.0
