"""Shared fixtures: parameter factories and solved models at test-sized grids."""

import pytest

from src.models.grid import build_time_grid
from src.models.params import ModelParams, validate_params
from src.solvers.nce import solve_nce
from src.solvers.riccati import solve_riccati

BASE_PARAMS = dict(
    A0=0.3, B0=1.0, C0=0.0,
    A=0.1, B=1.0, D=0.3, alpha=0.5, sigma=0.5,
    Q0=1.0, R0=1.0, H0=0.5,
    Q=1.0, R=1.0, H=0.5,
    T=1.0, xi=1.0, x_mean=0.5, x_var=0.25,
)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte Carlo acceptance runs")


def make_params(**overrides):
    """ValidatedParams from the base set with overrides applied."""
    return validate_params(ModelParams(**{**BASE_PARAMS, **overrides}))


def solve(params, M):
    grid = build_time_grid(params.T, M)
    riccati = solve_riccati(params, grid)
    return riccati, solve_nce(params, riccati)


@pytest.fixture
def base_params():
    return make_params()


@pytest.fixture
def solved(base_params):
    """(params, riccati, nce) for the base set at M=200."""
    riccati, nce = solve(base_params, 200)
    return base_params, riccati, nce


@pytest.fixture(scope="module")
def solved_fine():
    """(params, riccati, nce) for the base set at M=2000."""
    params = make_params()
    riccati, nce = solve(params, 2000)
    return params, riccati, nce
