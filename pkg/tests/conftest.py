import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from curl_codec import _accel

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "repo", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")

BACKENDS = ["numba", "numpy"] if _accel.HAVE_NUMBA else ["numpy"]


@pytest.fixture(params=BACKENDS)
def backend(request):
    """Run the test under each available kernel backend."""
    old = _accel.backend()
    _accel.set_backend(request.param)
    yield request.param
    _accel.set_backend(old)
