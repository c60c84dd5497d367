import numpy as np
import pytest

from robustcmu.cli import packaged_config
from robustcmu.config import parse_config
from robustcmu.model import CostModel, DivergenceModel, ExponentialDiscount, SystemConfig


@pytest.fixture(scope="session")
def reference():
    return parse_config(packaged_config("reference"))


@pytest.fixture(scope="session")
def asymmetric():
    return parse_config(packaged_config("asymmetric"))


@pytest.fixture(scope="session")
def single_class():
    return parse_config(packaged_config("single_class"))


@pytest.fixture
def sym_config():
    return SystemConfig([0.5, 0.5], [1.0, 1.0], [0.0, 0.0], [1.0, 1.0], [0.0, 0.0])


@pytest.fixture
def quad_cost():
    return CostModel([1.0, 1.0], [2.0, 2.0])


@pytest.fixture
def quad_div():
    return DivergenceModel([1.0, 1.0], [1.0, 1.0], 2.0)


@pytest.fixture
def discount():
    return ExponentialDiscount(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
