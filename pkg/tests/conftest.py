import numpy as np
import pytest

from crowdflow import bump_kernel, make_grid, sample_kernel


@pytest.fixture
def unit_grid():
    """Unit square, 64x64 cells, no walls (room = bounds), no exits."""
    return make_grid((0.0, 0.0, 1.0, 1.0), 1.0 / 64.0, 1.0 / 64.0)


@pytest.fixture
def corridor_grid():
    """Coarse corridor: the experiments' geometry at cell size 0.1."""
    return make_grid((-8.0, -4.0, 8.0, 4.0), 0.1, 0.1,
                     room=(-8.0, -3.0, 8.0, 3.0),
                     exits=(("left", -3.0, 3.0), ("right", -3.0, 3.0)))


@pytest.fixture
def unit_kernel(unit_grid):
    return sample_kernel(bump_kernel(0.25), unit_grid)


@pytest.fixture
def rng():
    return np.random.default_rng(20260826)
