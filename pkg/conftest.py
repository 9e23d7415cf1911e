import numpy as np
import pytest

from wave_lattice.grid import gaussian_packet, make_grid


@pytest.fixture
def line_grid():
    """1-D periodic grid, 256 points over [-10, 10)"""
    return make_grid(1, 1, (256,), (20.0,))


@pytest.fixture
def packet(line_grid):
    return gaussian_packet(line_grid, (0.0,), (1.0,))


@pytest.fixture
def pair_grid():
    """Two particles on a shared 1-D axis, 64 x 64"""
    return make_grid(1, 2, (64, 64), (16.0, 16.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
