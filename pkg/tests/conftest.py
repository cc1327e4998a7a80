import numpy as np
import pytest

from core.grid import Acquisition, Grid, Model


@pytest.fixture
def small_grid():
    return Grid(6, 6, 10.0, pml_width=3)


@pytest.fixture
def homogeneous_model(small_grid):
    return Model.from_velocity(small_grid, 2000.0, 1500.0, 3000.0)


@pytest.fixture
def unit_grid():
    # unit spacing, no absorbing layer: a well-conditioned operator for oracle comparisons
    return Grid(6, 6, 1.0, pml_width=0)


@pytest.fixture
def unit_model(unit_grid):
    return Model.from_velocity(unit_grid, 1.0, 0.5, 2.0)


@pytest.fixture
def unit_acquisition(unit_grid):
    receivers = np.arange(unit_grid.nx) + unit_grid.nx
    return Acquisition(unit_grid, receivers, [0.2, 0.3])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
