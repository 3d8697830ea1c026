import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vtube.pipeline import bundled_scenario, plan_scenario
from vtube.temporal import parametric_from_spatial

settings.register_profile(
    "repo", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def desk():
    return bundled_scenario("desk")


@pytest.fixture(scope="session")
def desk_tube(desk):
    tube, _ = plan_scenario(desk)
    return tube


@pytest.fixture(scope="session")
def desk_plp(desk_tube):
    return parametric_from_spatial(desk_tube.spatial, desk_tube.v_max)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
