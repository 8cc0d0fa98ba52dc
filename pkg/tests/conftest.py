import numpy as np
import pytest

from orbitproj.weights import Setting, WeightSystem


@pytest.fixture(scope="session")
def ws_dst22():
    return WeightSystem(Setting.parse("dst:2,2"))


@pytest.fixture(scope="session")
def ws_bos22():
    return WeightSystem(Setting.parse("bos:2,2"))


@pytest.fixture(scope="session")
def ws_fer42():
    return WeightSystem(Setting.parse("fer:4,2"))


@pytest.fixture()
def rng():
    return np.random.default_rng(20250811)
