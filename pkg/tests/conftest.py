import numpy as np
import pytest

from sagfn.env import CliqueEnv, CycleEnv, IllustrativeEnv, make_env
from sagfn.state_space import enumerate_states


@pytest.fixture(scope="session")
def illustrative_env():
    return IllustrativeEnv()


@pytest.fixture(scope="session")
def illustrative_dag(illustrative_env):
    return enumerate_states(illustrative_env)


@pytest.fixture(scope="session")
def fragment_env():
    return make_env({"env": "fragment"})


@pytest.fixture(scope="session")
def fragment_dag(fragment_env):
    return enumerate_states(fragment_env)


@pytest.fixture(scope="session")
def cycle_env():
    return CycleEnv()


@pytest.fixture(scope="session")
def cycle_dag(cycle_env):
    return enumerate_states(cycle_env)


@pytest.fixture(scope="session")
def clique_env():
    return CliqueEnv()


@pytest.fixture(scope="session")
def clique_dag(clique_env):
    return enumerate_states(clique_env)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
