import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fracslow import HurstIndex

settings.register_profile(
    "fracslow", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("fracslow")

HURSTS = (0.55, 0.7, 0.9)


@pytest.fixture(params=HURSTS, ids=lambda h: f"H={h}")
def hurst(request):
    return HurstIndex(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
