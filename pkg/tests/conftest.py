import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hardypot.geometry import DomainModel, spectral_params
from hardypot.measures import make_cloud

settings.register_profile("default", max_examples=50, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def dom3():
    return DomainModel(3, 0)


@pytest.fixture(scope="session")
def par3(dom3):
    return spectral_params(dom3, 2.0)


@pytest.fixture(scope="session")
def cloud3(dom3):
    return make_cloud(dom3, 4000, seed=0)


def ball_points(N, n, rng, r_max=0.999):
    """Uniform-direction points with radii in ``(0.05, r_max)``."""
    g = rng.normal(size=(n, N))
    g /= np.linalg.norm(g, axis=1)[:, None]
    return g * rng.uniform(0.05, r_max, n)[:, None]


def pytest_terminal_summary(terminalreporter):
    from .test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
