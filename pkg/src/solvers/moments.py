"""
Limiting Moments and Costs
==========================

In the limiting system each minor player is driven by its own noise only, so
under any feedback law of the form

    u = (1 + scale) * (-(B/R)(P x + k)) + w(t)

its state stays Gaussian and the mean and variance follow linear ODEs:

    mu' = (A - (1+scale) s P) mu - (1+scale) s k + B w + D xbar + alpha x0_hat
    v'  = 2 (A - (1+scale) s P) v + sigma^2

Quadratic costs then follow from (mu, v) without sampling. With scale = 0 and
w = 0 this is the equilibrium law, and mu reproduces xbar.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from loguru import logger

from src.models.grid import TimeGrid
from src.models.params import ValidatedParams
from src.solvers.integrators import rk4_linear, trapezoid
from src.solvers.nce import NceSolution
from src.solvers.riccati import RiccatiSolution

Offset = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class MomentTrajectory:
    """Mean and variance of one limiting minor state, with the law that produced them."""

    grid: TimeGrid
    mu: np.ndarray
    v: np.ndarray
    scale: float = 0.0
    offset: Optional[np.ndarray] = None

    def offset_nodes(self) -> np.ndarray:
        return np.zeros(self.grid.size) if self.offset is None else self.offset

    def to_columns(self) -> dict:
        return {"t": self.grid.nodes, "mu": self.mu, "v": self.v}


def solve_moments(
    params: ValidatedParams,
    riccati: RiccatiSolution,
    nce: NceSolution,
    scale: float = 0.0,
    offset: Optional[Offset] = None,
) -> MomentTrajectory:
    """Integrate the mean/variance ODEs forward from (x_mean, x_var)."""
    grid = nce.grid
    grid.require_same(riccati.grid, "Riccati grid")
    h, g = grid.h, 1.0 + scale
    s = params.s

    a_nodes = params.A - g * s * riccati.P
    a_mid = params.A - g * s * riccati.P_mid

    w_nodes = np.zeros(grid.size) if offset is None else np.asarray(offset(grid.nodes), dtype=float)
    w_mid = np.zeros(grid.M) if offset is None else np.asarray(offset(grid.midpoints), dtype=float)

    f_nodes = -g * s * nce.k + params.B * w_nodes + params.D * nce.xbar + params.alpha * nce.x0_hat
    f_mid = (
        -g * s * nce.midpoint("k")
        + params.B * w_mid
        + params.D * nce.midpoint("xbar")
        + params.alpha * nce.midpoint("x0_hat")
    )

    mu = rk4_linear(
        a_nodes[:, None, None],
        a_mid[:, None, None],
        np.array([params.x_mean]),
        h,
        forcing_nodes=f_nodes[:, None],
        forcing_mid=f_mid[:, None],
    )[:, 0]

    noise = np.full(grid.size, params.sigma**2)
    v = rk4_linear(
        2.0 * a_nodes[:, None, None],
        2.0 * a_mid[:, None, None],
        np.array([params.x_var]),
        h,
        forcing_nodes=noise[:, None],
        forcing_mid=noise[:grid.M, None],
    )[:, 0]

    return MomentTrajectory(
        grid=grid,
        mu=mu,
        v=v,
        scale=scale,
        offset=None if offset is None else w_nodes,
    )


def expected_control_square(
    params: ValidatedParams, riccati: RiccatiSolution, nce: NceSolution, moments: MomentTrajectory
) -> np.ndarray:
    """E u(t)^2 under the law the moments were computed for."""
    g = 1.0 + moments.scale
    K = params.gain_scale * riccati.P
    c = params.gain_scale * nce.k
    mean_u = -g * (K * moments.mu + c) + moments.offset_nodes()
    return mean_u**2 + (g * K) ** 2 * moments.v


def limiting_cost_minor(
    params: ValidatedParams,
    riccati: RiccatiSolution,
    nce: NceSolution,
    moments: MomentTrajectory,
) -> float:
    """
    Limiting minor cost
        1/2 int [Q ((mu - xbar)^2 + v) + R E u^2] dt + 1/2 H (mu(T)^2 + v(T)),
    trapezoid rule on the shared grid.
    """
    moments.grid.require_same(nce.grid, "moment grid")
    running = params.Q * ((moments.mu - nce.xbar) ** 2 + moments.v)
    running = running + params.R * expected_control_square(params, riccati, nce, moments)
    terminal = params.H * (moments.mu[-1] ** 2 + moments.v[-1])
    return float(0.5 * trapezoid(running, moments.grid.h) + 0.5 * terminal)


def major_cost(
    params: ValidatedParams,
    grid: TimeGrid,
    x0: np.ndarray,
    xbar: np.ndarray,
    u0: np.ndarray,
) -> float:
    """1/2 int [Q0 (x0 - xbar)^2 + R0 u0^2] dt + 1/2 H0 x0(0)^2 along deterministic paths."""
    running = params.Q0 * (x0 - xbar) ** 2 + params.R0 * u0**2
    return float(0.5 * trapezoid(running, grid.h) + 0.5 * params.H0 * x0[0] ** 2)


def limiting_cost_major(params: ValidatedParams, nce: NceSolution) -> float:
    cost = major_cost(params, nce.grid, nce.x0_hat, nce.xbar, nce.u0)
    logger.debug(f"Limiting major cost J0_bar={cost:.10g}")
    return cost
