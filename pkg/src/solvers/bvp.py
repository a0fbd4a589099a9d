"""
Linear Two-Point Boundary-Value Problems
========================================

Canonical form

    Y'(t) = F(t) Y(t) + g(t),      L_init Y(0) + L_term Y(T) = c,

solved by the fundamental-matrix (linear shooting) method: integrate the
homogeneous system from a shooting basis S plus one particular solution from
zero, then solve the d x d boundary-matching system for the basis weights.
The consistency system of the game and the responses to major deviations
are both written in this form.
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from loguru import logger

from src.models.grid import TimeGrid
from src.solvers.integrators import central_difference, rk4_linear
from src.utils.errors import GridMismatchError, NceSingularError, NceUnstableError

DEFAULT_CONDITION_THRESHOLD = 1e10


@dataclass(frozen=True)
class LinearBvpSystem:
    """Drift and forcing sampled on the grid nodes and midpoints, plus the boundary operator."""

    grid: TimeGrid
    labels: Tuple[str, ...]
    drift_nodes: np.ndarray
    drift_mid: np.ndarray
    forcing_nodes: np.ndarray
    forcing_mid: np.ndarray
    L_init: np.ndarray
    L_term: np.ndarray
    c: np.ndarray
    row_labels: Tuple[str, ...]

    @property
    def dimension(self) -> int:
        return len(self.labels)

    def check(self) -> None:
        """Shapes consistent, drift finite, boundary rows independent."""
        d, M = self.dimension, self.grid.M
        if self.drift_nodes.shape != (M + 1, d, d) or self.drift_mid.shape != (M, d, d):
            raise GridMismatchError(
                f"drift sampled on {self.drift_nodes.shape[0] - 1} steps, grid has M={M}"
            )
        if not (np.all(np.isfinite(self.drift_nodes)) and np.all(np.isfinite(self.drift_mid))):
            raise NceUnstableError("NCE unstable: non-finite drift entries")
        boundary = np.hstack([self.L_init, self.L_term])
        if boundary.shape != (d, 2 * d) or np.linalg.matrix_rank(boundary) != d:
            raise NceSingularError(f"NCE singular: boundary operator needs {d} independent rows")


@dataclass(frozen=True)
class BvpSolution:
    """Solution at the nodes with its derivatives; midpoint values are rebuilt by Hermite interpolation."""

    grid: TimeGrid
    labels: Tuple[str, ...]
    states: np.ndarray
    derivatives: np.ndarray
    condition_number: float

    def column(self, label: str) -> np.ndarray:
        return self.states[:, self.labels.index(label)]


@dataclass
class BvpResidualReport:
    """Per-equation max interior residual and per-boundary-row defect."""

    equations: Dict[str, float] = field(default_factory=dict)
    boundary: Dict[str, float] = field(default_factory=dict)

    @property
    def max_equation(self) -> float:
        return max(self.equations.values(), default=0.0)

    @property
    def max_boundary(self) -> float:
        return max(self.boundary.values(), default=0.0)


def solve_bvp(
    system: LinearBvpSystem,
    grid: TimeGrid,
    basis: Optional[np.ndarray] = None,
    condition_threshold: float = DEFAULT_CONDITION_THRESHOLD,
) -> BvpSolution:
    """
    Solve the linear BVP by fundamental-matrix shooting.

    Args:
        system: assembled system on `grid`
        grid: grid to solve on (must match the system's)
        basis: invertible d x d shooting basis, identity by default
        condition_threshold: above this the matching matrix counts as singular

    Raises:
        NceSingularError: boundary-matching matrix numerically singular
        NceUnstableError: overflow/NaN during integration
    """
    grid.require_same(system.grid, "BVP grid")
    system.check()
    d, h = system.dimension, grid.h
    S = np.eye(d) if basis is None else np.asarray(basis, dtype=float)

    phi = rk4_linear(system.drift_nodes, system.drift_mid, S, h)
    particular = rk4_linear(
        system.drift_nodes,
        system.drift_mid,
        np.zeros(d),
        h,
        forcing_nodes=system.forcing_nodes,
        forcing_mid=system.forcing_mid,
    )
    if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(particular))):
        raise NceUnstableError("NCE unstable, refine grid or shrink T")

    matching = system.L_init @ S + system.L_term @ phi[-1]
    rhs = system.c - system.L_term @ particular[-1]
    condition_number = float(np.linalg.cond(matching))
    if not np.isfinite(condition_number) or condition_number > condition_threshold:
        raise NceSingularError(
            f"NCE singular: boundary-matching condition number {condition_number:.3e} "
            f"exceeds {condition_threshold:.1e}; the system is solvable for B0 != 0, "
            "so this points at the discretization (refine the grid)"
        )

    weights = np.linalg.solve(matching, rhs)
    states = np.einsum("tij,j->ti", phi, weights) + particular
    derivatives = np.einsum("tij,tj->ti", system.drift_nodes, states) + system.forcing_nodes

    logger.debug(f"Shooting solve d={d}, M={grid.M}: cond={condition_number:.3e}")
    return BvpSolution(
        grid=grid,
        labels=system.labels,
        states=states,
        derivatives=derivatives,
        condition_number=condition_number,
    )


def bvp_residual(states: np.ndarray, system: LinearBvpSystem) -> BvpResidualReport:
    """Residuals of a candidate node trajectory against the system."""
    h = system.grid.h
    dY = central_difference(states, h)
    rhs = np.einsum("tij,tj->ti", system.drift_nodes[1:-1], states[1:-1]) + system.forcing_nodes[1:-1]
    eq = np.max(np.abs(dY - rhs), axis=0)
    defect = np.abs(system.L_init @ states[0] + system.L_term @ states[-1] - system.c)

    return BvpResidualReport(
        equations={label: float(v) for label, v in zip(system.labels, eq)},
        boundary={label: float(v) for label, v in zip(system.row_labels, defect)},
    )
