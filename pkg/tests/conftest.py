"""Shared fixtures: desk-scale parameters and cached grids/solves.

The default production grid (241 x 81 on [-6, 6] x [-1, 1]) and its unit
short cycle are expensive enough to share session-wide; the small grid
(121 x 41) is used by unit tests that exercise structure rather than
accuracy.
"""

import pytest

from eppsvi.model import OscillatorParams, get_functional
from eppsvi.grid import build_grid
from eppsvi.shortcycle import solve_short_cycle


@pytest.fixture(scope="session")
def params():
    return OscillatorParams(c0=1.0, k=1.0, Y=1.0)


@pytest.fixture(scope="session")
def grid(params):
    return build_grid(params)  # L=6, 241 x 81


@pytest.fixture(scope="session")
def small_grid(params):
    return build_grid(params, Ny=121, Nz=41)


@pytest.fixture(scope="session")
def v_one(grid):
    return solve_short_cycle(get_functional("one"), 0.0, grid)


@pytest.fixture(scope="session")
def v_one_small(small_grid):
    return solve_short_cycle(get_functional("one"), 0.0, small_grid)
