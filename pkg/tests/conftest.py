import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ucpredict.grid import load_fixture_grid, load_fixture_scenario
from ucpredict.toy import small_grid, small_scenario

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def six_bus():
    return load_fixture_grid("six_bus"), load_fixture_scenario("six_bus")


@pytest.fixture
def small_case():
    rng = np.random.default_rng(0)
    grid = small_grid(rng)
    return grid, small_scenario(rng, grid)
