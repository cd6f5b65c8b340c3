import itertools
import math

import numpy as np
import pytest

from randnls.spectral import Field, Grid, random_field


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def grid1d():
    return Grid(1, 256)


@pytest.fixture
def grid2d():
    return Grid(2, 64, 4.0 * math.pi)


@pytest.fixture
def grid3d():
    return Grid(3, 32, 4.0 * math.pi)


@pytest.fixture
def field1d(grid1d, rng) -> Field:
    return random_field(grid1d, rng)


def brute_force_v2(states: np.ndarray, volume_element: float = 1.0) -> float:
    """Exhaustive 2-variation over all increasing sample subsets (the oracle)."""
    flat = np.asarray(states).reshape(len(states), -1)
    m = len(flat)

    def dist_sq(i: int, j: int) -> float:
        return volume_element * float(np.sum(np.abs(flat[i] - flat[j]) ** 2))

    best = 0.0
    for size in range(2, m + 1):
        for subset in itertools.combinations(range(m), size):
            total = sum(dist_sq(subset[k - 1], subset[k]) for k in range(1, size))
            best = max(best, total)
    return math.sqrt(best)
