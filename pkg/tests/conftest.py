import numpy as np
import pytest

from discoflux import (
    JumpKernel,
    MollifierKernel,
    constant_speed,
    riemann_profile,
    step_speed,
    zrp_model,
)


@pytest.fixture(scope="session")
def fixture_speed():
    """The canonical speed field: lambda = 2 on [0, 0.5), 1 on [0.5, 1)."""
    return step_speed([2.0, 1.0], [0.0, 0.5])


@pytest.fixture(scope="session")
def fixture_model(fixture_speed):
    """Indicator-rate ZRP over the step speed field (saturating closure)."""
    return zrp_model(fixture_speed, "indicator")


@pytest.fixture(scope="session")
def identity_model():
    """Identity-rate ZRP over a constant speed field (linear closure)."""
    return zrp_model(constant_speed(1.0), "identity")


@pytest.fixture(scope="session")
def tasep():
    return JumpKernel.totally_asymmetric()


@pytest.fixture(scope="session")
def fixture_profile():
    """Riemann data: the m_0.5 value 1/3 on the fast region, 0.4 on the slow one."""
    return riemann_profile(1.0 / 3.0, 0.4, 0.5)


@pytest.fixture
def kernel32():
    return MollifierKernel(1.0 / 32.0)
