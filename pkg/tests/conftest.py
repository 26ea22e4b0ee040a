import numpy as np
import pytest

from fotd.benchmarks import make_toy_problem, toy_case_params


@pytest.fixture(scope="session")
def toy_case1_small():
    """Case-1 toy problem at N=20 for cheap unit tests."""
    spec, _ = toy_case_params(1, N=20)
    return make_toy_problem(spec)


@pytest.fixture(autouse=True)
def _fixed_numpy_printoptions():
    with np.printoptions(precision=6, suppress=False):
        yield
