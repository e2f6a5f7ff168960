import numpy as np
import pytest

from kinklab import Grid, KinkConfig


@pytest.fixture(scope="session")
def grid02():
    """Default grid for eps = 0.02 work (dx = eps/10)."""
    return Grid.for_eps(0.02, 10)


@pytest.fixture(scope="session")
def cfg3(grid02):
    """Three well-separated kinks at eps = 0.02."""
    return KinkConfig([0.25, 0.5, 0.75], eps=0.02)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260808)
