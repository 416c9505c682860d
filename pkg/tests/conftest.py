import pytest
from hypothesis import HealthCheck, settings

from cnsflow.grid import Grid
from cnsflow.initial import gaussian

settings.register_profile(
    "default", deadline=None, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid():
    return Grid(12.0, 256)


@pytest.fixture(scope="session")
def small_grid():
    return Grid(12.0, 128)


@pytest.fixture(scope="session")
def W(grid):
    return gaussian(grid, 2.0)
