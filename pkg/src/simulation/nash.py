"""
Equilibrium Gap Estimation
==========================

A unilateral deviation is applied to either the major player or one minor
player, the population is re-simulated on the same noise streams as the
equilibrium run, and the deviator's cost difference

    delta = J(deviation) - J(equilibrium)

is recorded. The estimated equilibrium gap is max(0, max(-delta)) over a
finite family of deviations (feedback scaling, constant offsets, pulses on a
time window).

A major deviation is a deterministic control path, so the major state is
re-solved backward from its terminal value and the minor players respond
through a new offset function k and mean field xbar. Both are computed in
perturbation form around the equilibrium, so a null deviation reproduces the
equilibrium inputs exactly.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from src.models.controls import FeedbackPerturbation
from src.models.params import ValidatedParams
from src.simulation.population import (
    PopulationSample,
    SimulationOptions,
    equilibrium_plan,
    simulate_population,
    standard_error,
)
from src.solvers.bvp import LinearBvpSystem, solve_bvp
from src.solvers.integrators import hermite_midpoints, rk4_linear
from src.solvers.moments import (
    limiting_cost_major,
    limiting_cost_minor,
    major_cost,
    solve_moments,
)
from src.solvers.nce import NceSolution, hamiltonian_coefficients
from src.solvers.riccati import RiccatiSolution
from src.utils.errors import SimulationInputError, SimulationOverflowError

RESPONDER_K_MODES = ("recomputed", "frozen")


class DeviationKind(str, Enum):
    FEEDBACK_SCALE = "feedback-scale"
    CONSTANT_OFFSET = "constant-offset"
    TIME_WINDOW_PULSE = "time-window-pulse"


class Target(str, Enum):
    MAJOR = "major"
    MINOR = "minor"


@dataclass(frozen=True)
class DeviationSpec:
    """One alternative control: kind, magnitude, optional window, who deviates."""

    kind: DeviationKind
    theta: float
    target: Target = Target.MINOR
    window: Optional[Tuple[float, float]] = None
    index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", DeviationKind(self.kind))
        object.__setattr__(self, "target", Target(self.target))
        if self.kind is DeviationKind.TIME_WINDOW_PULSE and self.window is None:
            raise ValueError("time-window-pulse deviation needs a window")
        if self.window is not None:
            t_a, t_b = self.window
            if not t_a < t_b:
                raise ValueError(f"window must satisfy t_a < t_b, got {self.window}")

    def check_horizon(self, T: float) -> None:
        if self.window is not None and (self.window[0] < 0 or self.window[1] > T):
            raise ValueError(f"window {self.window} not inside [0, {T}]")

    @property
    def is_null(self) -> bool:
        return self.theta == 0.0

    @property
    def label(self) -> str:
        window = "" if self.window is None else f"[{self.window[0]:g},{self.window[1]:g}]"
        return f"{self.target.value}:{self.kind.value}:{self.theta:g}{window}"

    def perturbation(self) -> FeedbackPerturbation:
        if self.kind is DeviationKind.FEEDBACK_SCALE:
            return FeedbackPerturbation(scale=self.theta)
        return FeedbackPerturbation(level=self.theta, window=self.window)


def default_family(T: float, target: Target, index: int = 0) -> List[DeviationSpec]:
    """Null offset, three scalings, two offsets and one pulse on [T/4, T/2]."""
    kinds = [
        (DeviationKind.CONSTANT_OFFSET, 0.0, None),
        (DeviationKind.FEEDBACK_SCALE, -1.0, None),
        (DeviationKind.FEEDBACK_SCALE, -0.2, None),
        (DeviationKind.FEEDBACK_SCALE, 0.2, None),
        (DeviationKind.CONSTANT_OFFSET, -0.5, None),
        (DeviationKind.CONSTANT_OFFSET, 0.5, None),
        (DeviationKind.TIME_WINDOW_PULSE, 1.0, (T / 4, T / 2)),
    ]
    return [DeviationSpec(kind, theta, Target(target), window, index) for kind, theta, window in kinds]


def suboptimal_family(T: float, target: Target, index: int = 0) -> List[DeviationSpec]:
    """Null deviation plus the two strictly suboptimal ones (u scaled to zero, offset +0.5)."""
    target = Target(target)
    return [
        DeviationSpec(DeviationKind.CONSTANT_OFFSET, 0.0, target, None, index),
        DeviationSpec(DeviationKind.FEEDBACK_SCALE, -1.0, target, None, index),
        DeviationSpec(DeviationKind.CONSTANT_OFFSET, 0.5, target, None, index),
    ]


DEVIATION_FAMILIES = {"default": default_family, "suboptimal": suboptimal_family}


def deviation_family(name: str, T: float, target: Target, index: int = 0) -> List[DeviationSpec]:
    try:
        builder = DEVIATION_FAMILIES[name]
    except KeyError as e:
        raise ValueError(f"Unknown deviation family: {name}") from e
    return builder(T, target, index)


@dataclass(frozen=True)
class LimitingMajorResponse:
    """Major path under a deviation and the limiting minor response to it."""

    l0: np.ndarray
    u0: np.ndarray
    xbar: np.ndarray
    k: np.ndarray
    cost: float


def limiting_major_response(
    params: ValidatedParams,
    riccati: RiccatiSolution,
    nce: NceSolution,
    perturbation: FeedbackPerturbation,
    responder_k: str = "recomputed",
) -> LimitingMajorResponse:
    """
    Solve the major state backward from xi under the deviated control and the
    (xbar, k) pair the minors build from it; return the limiting major cost.

    responder_k="recomputed" re-solves the two-point problem for (xbar, k);
    "frozen" keeps the equilibrium k and only re-integrates xbar.
    """
    if responder_k not in RESPONDER_K_MODES:
        raise ValueError(f"responder_k must be one of {RESPONDER_K_MODES}, got {responder_k}")
    grid = nce.grid
    grid.require_same(riccati.grid, "Riccati grid")
    h, M = grid.h, grid.M

    u0_mid = -nce.major_gain * nce.midpoint("p0")
    u0_dev = perturbation.apply(nce.u0, grid.nodes)
    du = u0_dev - nce.u0
    du_mid = perturbation.apply(u0_mid, grid.midpoints) - u0_mid

    A0_nodes = np.full((M + 1, 1, 1), params.A0)
    dl = rk4_linear(
        A0_nodes,
        A0_nodes[:M],
        np.zeros(1),
        h,
        forcing_nodes=(params.B0 * du)[:, None],
        forcing_mid=(params.B0 * du_mid)[:, None],
        backward=True,
    )[:, 0]
    dl_mid = hermite_midpoints(dl, params.A0 * dl + params.B0 * du, h)

    cn = hamiltonian_coefficients(params, riccati.P)
    cm = hamiltonian_coefficients(params, riccati.P_mid)

    if responder_k == "recomputed":

        def drift(c):
            return np.stack([np.stack([c.A_bar, c.C_bar], -1), np.stack([c.B_til, c.A_til], -1)], -2)

        system = LinearBvpSystem(
            grid=grid,
            labels=("xbar", "k"),
            drift_nodes=drift(cn),
            drift_mid=drift(cm),
            forcing_nodes=np.column_stack([cn.B_bar * dl, cn.C_til * dl]),
            forcing_mid=np.column_stack([cm.B_bar * dl_mid, cm.C_til * dl_mid]),
            L_init=np.array([[1.0, 0.0], [0.0, 0.0]]),
            L_term=np.array([[0.0, 0.0], [0.0, 1.0]]),
            c=np.zeros(2),
            row_labels=("xbar(0)", "k(T)"),
        )
        response = solve_bvp(system, grid)
        dxbar, dk = response.column("xbar"), response.column("k")
    else:
        dxbar = rk4_linear(
            cn.A_bar[:, None, None],
            cm.A_bar[:, None, None],
            np.zeros(1),
            h,
            forcing_nodes=(cn.B_bar * dl)[:, None],
            forcing_mid=(cm.B_bar * dl_mid)[:, None],
        )[:, 0]
        dk = np.zeros(grid.size)

    l0 = nce.x0_hat + dl
    xbar = nce.xbar + dxbar
    return LimitingMajorResponse(
        l0=l0,
        u0=u0_dev,
        xbar=xbar,
        k=nce.k + dk,
        cost=major_cost(params, grid, l0, xbar, u0_dev),
    )


@dataclass
class GapEntry:
    """Outcome of one deviation at one population size."""

    spec: DeviationSpec
    N: int
    n_paths: int
    J_base: float = float("nan")
    J_dev: float = float("nan")
    delta: float = float("nan")
    se: float = float("nan")
    J_bar_base: float = float("nan")
    J_bar_dev: float = float("nan")
    avg_gap_sq: float = float("nan")
    mean_square_sup: float = float("nan")
    control_energy: float = float("nan")
    status: str = "ok"
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _paired(entry: GapEntry, base_costs: np.ndarray, dev_costs: np.ndarray, sample: PopulationSample):
    diff = dev_costs - base_costs
    entry.J_base = float(base_costs.mean())
    entry.J_dev = float(dev_costs.mean())
    entry.delta = float(diff.mean())
    entry.se = float(standard_error(diff))
    entry.avg_gap_sq = float(np.max(sample.node_stats.avg_gap_sq))
    entry.mean_square_sup = float(np.max(sample.node_stats.mean_square))
    entry.control_energy = float(sample.control_energy.mean())
    return entry


def deviate_major(
    params: ValidatedParams,
    riccati: RiccatiSolution,
    nce: NceSolution,
    dev: DeviationSpec,
    N: int,
    n_paths: int,
    seed: int,
    options: Optional[SimulationOptions] = None,
    responder_k: str = "recomputed",
    base: Optional[PopulationSample] = None,
) -> GapEntry:
    """Major player's cost change under `dev`, on common random numbers."""
    dev.check_horizon(params.T)
    entry = GapEntry(spec=dev, N=N, n_paths=n_paths)
    response = limiting_major_response(params, riccati, nce, dev.perturbation(), responder_k)
    entry.J_bar_base = limiting_cost_major(params, nce)
    entry.J_bar_dev = response.cost

    plan = replace(
        equilibrium_plan(params, riccati, nce),
        x0=response.l0,
        u0=response.u0,
        xbar=response.xbar,
        k=response.k,
    )
    try:
        base = base or simulate_population(params, riccati, nce, N, n_paths, seed, options)
        sample = simulate_population(params, riccati, nce, N, n_paths, seed, options, plan=plan)
    except SimulationOverflowError as e:
        logger.warning(f"Deviation {dev.label} at N={N} overflowed: {e}")
        entry.status, entry.message = e.code, str(e)
        return entry

    return _paired(entry, base.major_costs, sample.major_costs, sample)


def deviate_minor(
    params: ValidatedParams,
    riccati: RiccatiSolution,
    nce: NceSolution,
    dev: DeviationSpec,
    i: int,
    N: int,
    n_paths: int,
    seed: int,
    options: Optional[SimulationOptions] = None,
    base: Optional[PopulationSample] = None,
) -> GapEntry:
    """Cost change of minor player i under `dev`; the other N-1 keep the equilibrium feedback."""
    dev.check_horizon(params.T)
    if not 0 <= i < N:
        raise SimulationInputError(f"minor index {i} outside 0..{N - 1}")
    entry = GapEntry(spec=dev, N=N, n_paths=n_paths)
    law = dev.perturbation()

    entry.J_bar_base = limiting_cost_minor(params, riccati, nce, solve_moments(params, riccati, nce))
    deviated = solve_moments(params, riccati, nce, scale=law.scale, offset=law.offset)
    entry.J_bar_dev = limiting_cost_minor(params, riccati, nce, deviated)

    plan = replace(equilibrium_plan(params, riccati, nce), deviator=i, law=law)
    try:
        base = base or simulate_population(params, riccati, nce, N, n_paths, seed, options)
        sample = simulate_population(params, riccati, nce, N, n_paths, seed, options, plan=plan)
    except SimulationOverflowError as e:
        logger.warning(f"Deviation {dev.label} at N={N} overflowed: {e}")
        entry.status, entry.message = e.code, str(e)
        return entry

    return _paired(entry, base.minor_costs[:, i], sample.minor_costs[:, i], sample)


@dataclass
class GapReport:
    """Deviation table for one population size and target, with the gap estimate."""

    N: int
    entries: List[GapEntry] = field(default_factory=list)

    def epsilon_for(self, target: Optional[Target] = None) -> float:
        deltas = [e.delta for e in self.entries if e.ok and target in (None, e.spec.target)]
        return max(0.0, max((-d for d in deltas), default=0.0))

    @property
    def epsilon_hat(self) -> float:
        return self.epsilon_for(None)

    def rows(self) -> List[Dict]:
        return [
            {
                "target": e.spec.target.value,
                "kind": e.spec.kind.value,
                "theta": e.spec.theta,
                "window": "" if e.spec.window is None else f"{e.spec.window[0]:g}-{e.spec.window[1]:g}",
                "N": e.N,
                "J_base": e.J_base,
                "J_dev": e.J_dev,
                "delta": e.delta,
                "se": e.se,
                "epsilon_hat": self.epsilon_for(e.spec.target),
                "J_bar_base": e.J_bar_base,
                "J_bar_dev": e.J_bar_dev,
                "avg_gap_sq": e.avg_gap_sq,
                "status": e.status,
            }
            for e in self.entries
        ]


def nash_gap(entries: Sequence[GapEntry]) -> GapReport:
    """Aggregate deviation entries of one population size into a report."""
    if not entries:
        raise ValueError("nash_gap needs at least one deviation entry")
    sizes = {e.N for e in entries}
    if len(sizes) != 1:
        raise ValueError(f"entries mix population sizes {sorted(sizes)}")
    report = GapReport(N=entries[0].N, entries=list(entries))
    logger.info(f"N={report.N}: epsilon_hat={report.epsilon_hat:.4g} over {len(entries)} deviations")
    return report


def evaluate_family(
    params: ValidatedParams,
    riccati: RiccatiSolution,
    nce: NceSolution,
    specs: Sequence[DeviationSpec],
    N: int,
    n_paths: int,
    seed: int,
    options: Optional[SimulationOptions] = None,
    responder_k: str = "recomputed",
) -> GapReport:
    """Run every deviation against one shared equilibrium sample."""
    base = simulate_population(params, riccati, nce, N, n_paths, seed, options)
    entries = []
    for spec in specs:
        if spec.target is Target.MAJOR:
            entry = deviate_major(
                params, riccati, nce, spec, N, n_paths, seed, options, responder_k, base=base
            )
        else:
            entry = deviate_minor(
                params, riccati, nce, spec, spec.index, N, n_paths, seed, options, base=base
            )
        entries.append(entry)
    return nash_gap(entries)
