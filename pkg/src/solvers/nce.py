"""
NCE Consistency System
======================

With a deterministic terminal value every martingale integrand of the
consistency system vanishes, and what is left is a six-dimensional linear
two-point boundary-value problem in

    Y = (x0_hat, xbar, k, p0, p, q)

with three conditions at t = 0 and three at t = T. The drift depends on time
only through the Riccati solution P(t). Rows are built from the Hamiltonian
coefficients

    A_bar = A + D - s P      B_bar = alpha      C_bar = -s
    A_til = -A + s P         B_til = Q - D P    C_til = -alpha P

(s = B^2/R), which appear both in the mean-field/offset pair (xbar, k) and,
transposed, in the major player's adjoints (p0, p, q).
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from loguru import logger

from src.models.grid import TimeGrid
from src.models.params import ValidatedParams
from src.solvers.bvp import (
    DEFAULT_CONDITION_THRESHOLD,
    BvpResidualReport,
    BvpSolution,
    LinearBvpSystem,
    bvp_residual,
    solve_bvp,
)
from src.solvers.integrators import hermite_midpoints, rk4_linear
from src.solvers.riccati import RiccatiSolution
from src.utils.errors import GridMismatchError

NCE_LABELS = ("x0_hat", "xbar", "k", "p0", "p", "q")
NCE_BOUNDARY_ROWS = ("x0_hat(T)", "xbar(0)", "k(T)", "p0(0)+H0*x0_hat(0)", "p(T)", "q(0)")


@dataclass(frozen=True)
class HamiltonianCoefficients:
    """Coefficient functions sampled wherever P was sampled."""

    A_bar: np.ndarray
    B_bar: np.ndarray
    C_bar: np.ndarray
    A_til: np.ndarray
    B_til: np.ndarray
    C_til: np.ndarray


def hamiltonian_coefficients(params: ValidatedParams, P: np.ndarray) -> HamiltonianCoefficients:
    P = np.asarray(P, dtype=float)
    s = params.s
    ones = np.ones_like(P)
    return HamiltonianCoefficients(
        A_bar=params.A + params.D - s * P,
        B_bar=params.alpha * ones,
        C_bar=-s * ones,
        A_til=-params.A + s * P,
        B_til=params.Q - params.D * P,
        C_til=-params.alpha * P,
    )


def _nce_drift(params: ValidatedParams, P: np.ndarray) -> np.ndarray:
    """Stack of 6x6 drift matrices, one per entry of P."""
    c = hamiltonian_coefficients(params, P)
    F = np.zeros(P.shape + (6, 6))
    x0, xb, k, p0, p, q = range(6)

    F[:, x0, x0] = params.A0
    F[:, x0, p0] = -params.s0

    F[:, xb, x0] = c.B_bar
    F[:, xb, xb] = c.A_bar
    F[:, xb, k] = c.C_bar

    F[:, k, x0] = c.C_til
    F[:, k, xb] = c.B_til
    F[:, k, k] = c.A_til

    F[:, p0, x0] = -params.Q0
    F[:, p0, xb] = params.Q0
    F[:, p0, p0] = -params.A0
    F[:, p0, p] = -c.B_bar
    F[:, p0, q] = -c.C_til

    F[:, p, x0] = params.Q0
    F[:, p, xb] = -params.Q0
    F[:, p, p] = -c.A_bar
    F[:, p, q] = -c.B_til

    F[:, q, p] = -c.C_bar
    F[:, q, q] = -c.A_til
    return F


def assemble_nce(params: ValidatedParams, riccati: RiccatiSolution) -> LinearBvpSystem:
    """
    Build the consistency system on the Riccati solution's grid.

    Boundary rows, in order: x0_hat(T) = xi, xbar(0) = x_mean, k(T) = 0,
    p0(0) + H0 x0_hat(0) = 0, p(T) = 0, q(0) = 0.
    """
    grid = riccati.grid
    if grid.T != params.T:
        raise GridMismatchError(f"Riccati grid horizon {grid.T} differs from T={params.T}")

    L_init = np.zeros((6, 6))
    L_term = np.zeros((6, 6))
    L_term[0, 0] = 1.0
    L_init[1, 1] = 1.0
    L_term[2, 2] = 1.0
    L_init[3, 3] = 1.0
    L_init[3, 0] = params.H0
    L_term[4, 4] = 1.0
    L_init[5, 5] = 1.0
    c = np.array([params.xi, params.x_mean, 0.0, 0.0, 0.0, 0.0])

    return LinearBvpSystem(
        grid=grid,
        labels=NCE_LABELS,
        drift_nodes=_nce_drift(params, riccati.P),
        drift_mid=_nce_drift(params, riccati.P_mid),
        forcing_nodes=np.zeros((grid.size, 6)),
        forcing_mid=np.zeros((grid.M, 6)),
        L_init=L_init,
        L_term=L_term,
        c=c,
        row_labels=NCE_BOUNDARY_ROWS,
    )


@dataclass(frozen=True)
class NceSolution:
    """The six trajectories, their derivatives, and the (zero) martingale integrands."""

    grid: TimeGrid
    x0_hat: np.ndarray
    xbar: np.ndarray
    k: np.ndarray
    p0: np.ndarray
    p: np.ndarray
    q: np.ndarray
    derivatives: np.ndarray
    condition_number: float
    major_gain: float
    minor_gain: float

    @classmethod
    def from_bvp(cls, sol: BvpSolution, params: ValidatedParams) -> "NceSolution":
        columns = {label: sol.column(label).copy() for label in NCE_LABELS}
        return cls(
            grid=sol.grid,
            derivatives=sol.derivatives,
            condition_number=sol.condition_number,
            major_gain=params.B0 / params.R0,
            minor_gain=params.gain_scale,
            **columns,
        )

    @property
    def z0(self) -> np.ndarray:
        return np.zeros(self.grid.size)

    @property
    def beta0(self) -> np.ndarray:
        return np.zeros(self.grid.size)

    @property
    def beta_bar(self) -> np.ndarray:
        return np.zeros(self.grid.size)

    @property
    def u0(self) -> np.ndarray:
        """Major control -B0/R0 p0."""
        return -self.major_gain * self.p0

    @property
    def feedback_offset(self) -> np.ndarray:
        """-B/R k, the state-independent part of the minor feedback."""
        return -self.minor_gain * self.k

    def states(self) -> np.ndarray:
        return np.column_stack([getattr(self, label) for label in NCE_LABELS])

    def midpoint(self, label: str) -> np.ndarray:
        idx = NCE_LABELS.index(label)
        return hermite_midpoints(getattr(self, label), self.derivatives[:, idx], self.grid.h)

    def with_column(self, label: str, values: np.ndarray) -> "NceSolution":
        return replace(self, **{label: np.asarray(values, dtype=float)})

    def to_columns(self) -> dict:
        columns = {"t": self.grid.nodes}
        columns.update({label: getattr(self, label) for label in NCE_LABELS})
        columns["u0"] = self.u0
        return columns


def solve_nce(
    params: ValidatedParams,
    riccati: RiccatiSolution,
    basis: Optional[np.ndarray] = None,
    condition_threshold: float = DEFAULT_CONDITION_THRESHOLD,
) -> NceSolution:
    """Assemble and solve the consistency system on the Riccati grid."""
    system = assemble_nce(params, riccati)
    sol = solve_bvp(system, riccati.grid, basis=basis, condition_threshold=condition_threshold)
    nce = NceSolution.from_bvp(sol, params)
    logger.info(
        f"Solved NCE system on M={riccati.grid.M} steps: "
        f"x0_hat(0)={nce.x0_hat[0]:.10g}, cond={nce.condition_number:.3e}"
    )
    return nce


def nce_residual(sol: NceSolution, system: LinearBvpSystem) -> BvpResidualReport:
    """Per-equation interior residuals and per-row boundary defects."""
    sol.grid.require_same(system.grid, "NCE grid")
    return bvp_residual(sol.states(), system)


@dataclass(frozen=True)
class ConsistencyReport:
    """Max deviation of re-integrated xbar and k from the solved ones."""

    xbar: float
    k: float

    @property
    def worst(self) -> float:
        return max(self.xbar, self.k)


def consistency_check(
    sol: NceSolution, params: ValidatedParams, riccati: RiccatiSolution
) -> ConsistencyReport:
    """
    Re-integrate the mean-field ODE forward from x_mean (with the solved
    x0_hat and k as inputs) and the offset equation backward from k(T) = 0
    (with the solved xbar and x0_hat), and compare with the solved paths.
    """
    grid = sol.grid
    grid.require_same(riccati.grid, "Riccati grid")
    h = grid.h
    cn = hamiltonian_coefficients(params, riccati.P)
    cm = hamiltonian_coefficients(params, riccati.P_mid)
    x0, x0_m = sol.x0_hat, sol.midpoint("x0_hat")
    k, k_m = sol.k, sol.midpoint("k")
    xb, xb_m = sol.xbar, sol.midpoint("xbar")

    xbar_again = rk4_linear(
        cn.A_bar[:, None, None],
        cm.A_bar[:, None, None],
        np.array([params.x_mean]),
        h,
        forcing_nodes=(cn.C_bar * k + cn.B_bar * x0)[:, None],
        forcing_mid=(cm.C_bar * k_m + cm.B_bar * x0_m)[:, None],
    )[:, 0]
    k_again = rk4_linear(
        cn.A_til[:, None, None],
        cm.A_til[:, None, None],
        np.array([0.0]),
        h,
        forcing_nodes=(cn.B_til * xb + cn.C_til * x0)[:, None],
        forcing_mid=(cm.B_til * xb_m + cm.C_til * x0_m)[:, None],
        backward=True,
    )[:, 0]

    report = ConsistencyReport(
        xbar=float(np.max(np.abs(xbar_again - xb))),
        k=float(np.max(np.abs(k_again - k))),
    )
    logger.debug(f"Consistency discrepancies: xbar={report.xbar:.3e}, k={report.k:.3e}")
    return report
