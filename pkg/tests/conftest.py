import numpy as np
import pytest

import p2pmarket as pm


@pytest.fixture(scope="session")
def ieee():
    return pm.ieee13_instance()


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
