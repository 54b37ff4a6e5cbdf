"""Shared fixtures for the betaboost tests."""

import pytest

from betaboost.betatable import build_table

TABLE_ETA = 0.01
TABLE_GRID = [20, 50, 100, 200]


@pytest.fixture(scope="session")
def exact_table():
    """A small all-exact table at eta = 0.01."""
    return build_table(TABLE_ETA, n_grid=TABLE_GRID, upper_points=5, exact_cutoff=200)
