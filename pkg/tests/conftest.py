import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fcmi.datasets import iris_path, linear_synthetic, load_iris


@pytest.fixture(scope="session")
def iris():
    return load_iris()


@pytest.fixture(scope="session")
def iris_file():
    return iris_path()


@pytest.fixture(scope="session")
def synthetic():
    return linear_synthetic(n_rows=1000, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
