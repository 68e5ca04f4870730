import numpy as np
import pytest

from morpho import _kernels
from morpho.sim import PROFILES, SimProfile, default_environment_set


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    _kernels.warm_up()


@pytest.fixture(scope="session")
def desk():
    return PROFILES["desk"]


@pytest.fixture(scope="session")
def short_profile():
    # Cheap profile for property tests; contracts hold for any profile.
    return SimProfile(dt=0.1, steps=2000)


@pytest.fixture(scope="session")
def envset():
    return default_environment_set()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
