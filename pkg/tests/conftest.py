import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# numba-backed solves can stall a first example while the JIT warms up, so
# wall-clock deadlines are off; examples are derandomized for reproducibility.
settings.register_profile(
    "suite",
    deadline=None,
    max_examples=40,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session", autouse=True)
def _warm_solver():
    """Compile the flow solver once so per-test timings stay honest."""
    from hyperwass.transport import DiscreteMeasure, exact_wp

    mu = DiscreteMeasure(np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([1.0, 1.0]))
    nu = DiscreteMeasure(np.array([[0.0, 1.0], [1.0, 1.0]]), np.array([1.0, 1.0]))
    exact_wp(mu, nu, 2.0)
