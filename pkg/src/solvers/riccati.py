"""
Riccati Equation
================

Backward solve of the scalar Riccati equation that decouples the minor
players' adjoint as p_i = P x_i + k:

    P'(t) + 2 A P(t) - (B^2/R) P(t)^2 + Q = 0,    P(T) = H.

The unique solution is nonnegative and bounded whenever Q, H >= 0 and R > 0.
"""

import math
from dataclasses import dataclass

import numpy as np
from loguru import logger

from src.models.grid import TimeGrid
from src.models.params import ValidatedParams
from src.solvers.integrators import central_difference, hermite_midpoints
from src.utils.errors import GridMismatchError, RiccatiEscapeError

DEFAULT_ESCAPE_CAP = 1e12


@dataclass(frozen=True)
class RiccatiSolution:
    """P at the grid nodes, plus Hermite midpoint values for RK4 consumers."""

    grid: TimeGrid
    P: np.ndarray
    P_mid: np.ndarray

    def beta(self, params: ValidatedParams) -> np.ndarray:
        """Martingale integrand of the minor adjoint, sigma * P."""
        return params.sigma * self.P

    def to_columns(self) -> dict:
        return {"t": self.grid.nodes, "P": self.P}


def riccati_rhs(P, params: ValidatedParams):
    """dP/dt as a function of P (the equation is autonomous)."""
    return -2.0 * params.A * P + params.s * P * P - params.Q


def riccati_upper_bound(params: ValidatedParams) -> float:
    """
    Bound on max_t P(t) from the linear comparison equation.

    Dropping the nonpositive -(B^2/R) P^2 term gives P' >= -2A P - Q, so going
    backward P never exceeds the solution of the linear equation with A
    replaced by max(A, 0).
    """
    a = max(params.A, 0.0)
    T = params.T
    if a == 0.0:
        return params.H + params.Q * T
    growth = math.exp(2.0 * a * T)
    return params.H * growth + params.Q * (growth - 1.0) / (2.0 * a)


def solve_riccati(
    params: ValidatedParams,
    grid: TimeGrid,
    escape_cap: float = DEFAULT_ESCAPE_CAP,
) -> RiccatiSolution:
    """
    Integrate the Riccati equation backward from P(T) = H with fixed-step RK4.

    Raises:
        GridMismatchError: grid horizon differs from params.T
        RiccatiEscapeError: |P| exceeded escape_cap
    """
    if grid.T != params.T:
        raise GridMismatchError(f"grid horizon {grid.T} differs from T={params.T}")

    h = grid.h
    P = np.empty(grid.size)
    y = float(params.H)
    P[-1] = y

    def f(v):
        return riccati_rhs(v, params)

    for j in range(grid.M, 0, -1):
        k1 = f(y)
        k2 = f(y - 0.5 * h * k1)
        k3 = f(y - 0.5 * h * k2)
        k4 = f(y - h * k3)
        y = y - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not math.isfinite(y) or abs(y) > escape_cap:
            raise RiccatiEscapeError(
                f"Riccati escape: |P| exceeded {escape_cap:.1e} at t={grid.nodes[j - 1]:.6g}"
            )
        P[j - 1] = y

    P_mid = hermite_midpoints(P, f(P), h)
    P.flags.writeable = False
    logger.info(f"Solved Riccati on M={grid.M} steps: P(0)={P[0]:.10g}, P(T)={P[-1]:.10g}")
    return RiccatiSolution(grid=grid, P=P, P_mid=P_mid)


def riccati_residual(sol: RiccatiSolution, params: ValidatedParams) -> float:
    """Max over interior nodes of |P' + 2AP - (B^2/R)P^2 + Q|, P' by central differences."""
    P = sol.P
    dP = central_difference(P, sol.grid.h)
    interior = P[1:-1]
    residual = dP + 2.0 * params.A * interior - params.s * interior**2 + params.Q
    return float(np.max(np.abs(residual)))
