import numpy as np
import pytest

from survrulefit.simulate import calibrated, make_scenario, simulate_trial


@pytest.fixture(scope="session")
def s1_scenario():
    return calibrated(make_scenario("S1"), np.random.default_rng(11))


@pytest.fixture(scope="session")
def s1_trial(s1_scenario):
    return simulate_trial(s1_scenario, 500, np.random.default_rng(12))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
