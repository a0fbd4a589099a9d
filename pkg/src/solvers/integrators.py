"""
Fixed-Step Integration Helpers
==============================

Every ODE in the package is integrated on the shared uniform grid with the
classical 4-stage Runge-Kutta method. Time-dependent coefficients are supplied
at the grid nodes and at the step midpoints, so no interpolation happens
inside the stepper. Midpoint values of trajectories that are only known at the
nodes come from cubic Hermite interpolation, which keeps the overall scheme
fourth order.
"""

from typing import Optional

import numpy as np
from scipy.integrate import trapezoid as _trapezoid


def rk4_linear(
    drift_nodes: np.ndarray,
    drift_mid: np.ndarray,
    y0: np.ndarray,
    h: float,
    forcing_nodes: Optional[np.ndarray] = None,
    forcing_mid: Optional[np.ndarray] = None,
    backward: bool = False,
) -> np.ndarray:
    """
    Integrate y' = F(t) y + g(t) over the grid.

    Args:
        drift_nodes: F at the M+1 nodes, shape (M+1, d, d)
        drift_mid: F at the M midpoints, shape (M, d, d)
        y0: value at t=0 (forward) or at t=T (backward); shape (d,) or (d, k)
        h: step size
        forcing_nodes, forcing_mid: g at nodes/midpoints, shape (M+1, d)/(M, d)
        backward: integrate from t=T down to t=0

    Returns:
        Trajectory at the nodes, shape (M+1, *y0.shape), indexed by time.
    """
    F, Fm = drift_nodes, drift_mid
    g, gm = forcing_nodes, forcing_mid
    if g is None:
        g = np.zeros(F.shape[:2])
        gm = np.zeros(Fm.shape[:2])

    if backward:
        # s = T - t turns the terminal-value problem into an initial-value one
        F, Fm = -F[::-1], -Fm[::-1]
        g, gm = -g[::-1], -gm[::-1]

    y = np.array(y0, dtype=float)
    if y.ndim == 2:
        g, gm = g[..., None], gm[..., None]

    steps = Fm.shape[0]
    out = np.empty((steps + 1,) + y.shape)
    out[0] = y
    half = 0.5 * h
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(steps):
            k1 = F[j] @ y + g[j]
            k2 = Fm[j] @ (y + half * k1) + gm[j]
            k3 = Fm[j] @ (y + half * k2) + gm[j]
            k4 = F[j + 1] @ (y + h * k3) + g[j + 1]
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            out[j + 1] = y

    return out[::-1].copy() if backward else out


def hermite_midpoints(values: np.ndarray, derivatives: np.ndarray, h: float) -> np.ndarray:
    """Cubic Hermite interpolant evaluated halfway between consecutive nodes."""
    return 0.5 * (values[:-1] + values[1:]) + (h / 8.0) * (derivatives[:-1] - derivatives[1:])


def central_difference(values: np.ndarray, h: float) -> np.ndarray:
    """Derivative estimate at the interior nodes 1..M-1."""
    return (values[2:] - values[:-2]) / (2.0 * h)


def trapezoid(values: np.ndarray, h: float) -> float:
    """Trapezoid rule over the grid (along the first axis)."""
    return _trapezoid(values, dx=h, axis=0)
