import pytest

from gainsched import harness
from gainsched.certification import load_gain_bounds
from gainsched.plant import PlantParams
from gainsched.reference import TrajectoryConfig


@pytest.fixture(scope="session")
def default_cfg():
    return harness.default_run_config()


@pytest.fixture(scope="session")
def plant_params():
    return PlantParams()


@pytest.fixture(scope="session")
def traj_cfg():
    return TrajectoryConfig()


@pytest.fixture(scope="session")
def bounds():
    return load_gain_bounds()


@pytest.fixture(scope="session")
def library(default_cfg):
    return harness.build_library_from_config(default_cfg)


@pytest.fixture(scope="session")
def mid_entry(library):
    return library.entries[len(library) // 2]

