import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qpembed.flows import DET_MONITOR

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

GOLDEN = (math.sqrt(5) - 1) / 2


@pytest.fixture(autouse=True)
def det_guard():
    """Every finite-time integration in the suite keeps det Phi = 1 to 1e-12."""
    DET_MONITOR.reset()
    yield
    assert DET_MONITOR.max_err <= 1e-12, f"det drift {DET_MONITOR.max_err:.3g}"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def golden():
    return np.array([GOLDEN])
