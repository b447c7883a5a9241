import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ringheat.dynamics import assemble_drift
from ringheat.model import DeltaPairCoupling, SystemParams

settings.register_profile(
    "default",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def delta_pair():
    return DeltaPairCoupling(c=0.5, x1=1.0)


@pytest.fixture
def small_system(delta_pair):
    return assemble_drift(SystemParams(M=4, eta=0.3, T1=2.0, T2=1.0), delta_pair)


@pytest.fixture
def rng():
    return np.random.default_rng(20260824)
