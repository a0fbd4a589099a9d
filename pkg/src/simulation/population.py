"""
Finite-Population Simulation
============================

Euler-Maruyama simulation of N minor players under the decentralized feedback

    u_i = -(B/R) (P x_i + k),

coupled through the same-step state average, with the major player's state
taken from the NCE solution (it is deterministic in this setting). A single
player may be given a perturbed law (see `FeedbackPerturbation`), and the
major path and offset function can be replaced, which is how the deviation
scenarios reuse this engine.

Each simulated minor is paired with a limiting twin: the same law and the same
noise, but with the state average replaced by the mean field. The mean field
used here is the Euler recursion of the mean-field equation on the simulation
grid, so gap statistics measure the finite-N effect without the O(h) time
discretization bias (reported separately as `mean_field_bias`).

Paths are simulated in fixed-size chunks; per-node statistics are summed per
chunk and then across chunks in chunk order, so results are bit-identical for
any number of workers.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from tqdm import tqdm

from src.models.controls import EQUILIBRIUM, FeedbackPerturbation
from src.models.grid import TimeGrid
from src.models.params import ValidatedParams
from src.simulation.rng import NOISE_BLOCK, noise_steps
from src.solvers.moments import limiting_cost_major, limiting_cost_minor, major_cost, solve_moments
from src.solvers.nce import NceSolution
from src.solvers.riccati import RiccatiSolution
from src.utils.errors import SimulationInputError, SimulationOverflowError

DEFAULT_OVERFLOW_CAP = 1e8


@dataclass(frozen=True)
class SimulationOptions:
    workers: int = 1
    chunk_size: int = 50
    overflow_cap: float = DEFAULT_OVERFLOW_CAP
    keep_paths: bool = False
    progress: bool = False
    noise_block: int = NOISE_BLOCK


@dataclass(frozen=True)
class ClosedLoopPlan:
    """Deterministic inputs shared by every path of one simulation."""

    grid: TimeGrid
    P: np.ndarray
    k: np.ndarray
    x0: np.ndarray
    u0: np.ndarray
    xbar: np.ndarray
    deviator: Optional[int] = None
    law: FeedbackPerturbation = EQUILIBRIUM


def equilibrium_plan(
    params: ValidatedParams, riccati: RiccatiSolution, nce: NceSolution
) -> ClosedLoopPlan:
    nce.grid.require_same(riccati.grid, "Riccati grid")
    return ClosedLoopPlan(
        grid=nce.grid,
        P=riccati.P,
        k=nce.k,
        x0=nce.x0_hat,
        u0=nce.u0,
        xbar=nce.xbar,
    )


def _drift(params: ValidatedParams, x, u, average, x0):
    return params.A * x + params.B * u + params.D * average + params.alpha * x0


def discrete_mean_field(params: ValidatedParams, plan: ClosedLoopPlan) -> np.ndarray:
    """Euler recursion of the mean-field equation on the plan's grid."""
    grid = plan.grid
    K = params.gain_scale * plan.P
    c = params.gain_scale * plan.k
    m = np.empty(grid.size)
    m[0] = params.x_mean
    for j in range(grid.M):
        u = -(K[j] * m[j] + c[j])
        m[j + 1] = m[j] + _drift(params, m[j], u, m[j], plan.x0[j]) * grid.h
    return m


@dataclass(frozen=True)
class NodeStatistics:
    """Per-node sums over paths (and players where noted)."""

    n_paths: int
    N: int
    x_sum: np.ndarray  # sum over paths and players of x_i
    x_sq_sum: np.ndarray  # sum over paths and players of x_i^2
    gap_sum: np.ndarray  # sum over paths of (x^(N) - mean field)^2
    gap_sq_sum: np.ndarray

    @property
    def mean_state(self) -> np.ndarray:
        return self.x_sum / (self.n_paths * self.N)

    @property
    def mean_square(self) -> np.ndarray:
        return self.x_sq_sum / (self.n_paths * self.N)

    @property
    def state_variance(self) -> np.ndarray:
        """Variance across players and paths (unbiased)."""
        count = self.n_paths * self.N
        if count < 2:
            return np.zeros_like(self.x_sum)
        return (self.x_sq_sum - count * self.mean_state**2) / (count - 1)

    @property
    def avg_gap_sq(self) -> np.ndarray:
        return self.gap_sum / self.n_paths

    @property
    def avg_gap_se(self) -> np.ndarray:
        n = self.n_paths
        if n < 2:
            return np.zeros_like(self.gap_sum)
        var = np.maximum(self.gap_sq_sum - n * self.avg_gap_sq**2, 0.0) / (n - 1)
        return np.sqrt(var / n)


@dataclass(frozen=True)
class PopulationSample:
    """Per-path results of one simulation plus per-node summaries."""

    N: int
    n_paths: int
    seed: int
    grid: TimeGrid
    major_state: np.ndarray
    major_control: np.ndarray
    mean_field: np.ndarray
    major_costs: np.ndarray  # (n_paths,)
    minor_costs: np.ndarray  # (n_paths, N)
    limiting_costs: np.ndarray  # (n_paths, N), limiting twins
    control_energy: np.ndarray  # (n_paths,), player-averaged int u^2 dt
    strategy_gap: np.ndarray  # (n_paths,), player-averaged sup_t (u - u_twin)^2
    terminal_states: np.ndarray  # (n_paths, N)
    node_stats: NodeStatistics
    minor_states: Optional[np.ndarray] = field(default=None, repr=False)  # (n_paths, M+1, N)
    state_average: Optional[np.ndarray] = field(default=None, repr=False)  # (n_paths, M+1)


@dataclass
class _ChunkResult:
    major_costs: np.ndarray
    minor_costs: np.ndarray
    limiting_costs: np.ndarray
    control_energy: np.ndarray
    strategy_gap: np.ndarray
    terminal_states: np.ndarray
    node_sums: Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    minor_states: Optional[np.ndarray]
    state_average: Optional[np.ndarray]


def euler_paths(
    params: ValidatedParams,
    plan: ClosedLoopPlan,
    mean_field: np.ndarray,
    noise: Iterable[np.ndarray],
    keep_paths: bool = False,
    overflow_cap: float = DEFAULT_OVERFLOW_CAP,
) -> _ChunkResult:
    """
    Simulate a block of paths from given standard normals.

    Args:
        noise: M+1 arrays of shape (paths, N), consumed in order; the first
            draws the initial states
    """
    grid = plan.grid
    M, h = grid.M, grid.h
    draws = iter(noise)
    first = next(draws)
    n, N = first.shape
    weights = grid.trapezoid_weights()
    K = params.gain_scale * plan.P
    c = params.gain_scale * plan.k
    diffusion = params.sigma * np.sqrt(h)

    deviator = plan.deviator
    w = plan.law.offset(grid.nodes) if deviator is not None else None
    g = 1.0 + plan.law.scale

    x = params.x_mean + np.sqrt(params.x_var) * first
    twin = x.copy()

    major = np.zeros(n)
    minor = np.zeros((n, N))
    limiting = np.zeros((n, N))
    energy = np.zeros((n, N))
    sup_gap = np.zeros((n, N))
    x_sum, x_sq_sum = np.empty(M + 1), np.empty(M + 1)
    gap_sum, gap_sq_sum = np.empty(M + 1), np.empty(M + 1)
    states = np.empty((n, M + 1, N)) if keep_paths else None
    averages = np.empty((n, M + 1)) if keep_paths else None

    for j in range(M + 1):
        average = x.mean(axis=-1)
        u = -(K[j] * x + c[j])
        u_twin = -(K[j] * twin + c[j])
        if deviator is not None:
            u[:, deviator] = g * u[:, deviator] + w[j]
            u_twin[:, deviator] = g * u_twin[:, deviator] + w[j]

        wj = weights[j]
        minor += wj * (params.Q * (x - average[:, None]) ** 2 + params.R * u**2)
        limiting += wj * (params.Q * (twin - mean_field[j]) ** 2 + params.R * u_twin**2)
        energy += wj * u**2
        major += wj * (params.Q0 * (plan.x0[j] - average) ** 2 + params.R0 * plan.u0[j] ** 2)
        np.maximum(sup_gap, (u - u_twin) ** 2, out=sup_gap)

        gap = (average - mean_field[j]) ** 2
        gap_sum[j], gap_sq_sum[j] = gap.sum(), (gap**2).sum()
        x_sum[j], x_sq_sum[j] = x.sum(), (x**2).sum()
        if keep_paths:
            states[:, j] = x
            averages[:, j] = average

        if j == M:
            break
        dW = diffusion * next(draws)
        x = x + _drift(params, x, u, average[:, None], plan.x0[j]) * h + dW
        twin = twin + _drift(params, twin, u_twin, mean_field[j], plan.x0[j]) * h + dW

        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > overflow_cap:
            raise SimulationOverflowError(
                f"simulation overflow: |x| exceeded {overflow_cap:.1e} at t={grid.nodes[j + 1]:.6g}"
            )

    return _ChunkResult(
        major_costs=0.5 * major + 0.5 * params.H0 * plan.x0[0] ** 2,
        minor_costs=0.5 * minor + 0.5 * params.H * x**2,
        limiting_costs=0.5 * limiting + 0.5 * params.H * twin**2,
        control_energy=energy.mean(axis=-1),
        strategy_gap=sup_gap.mean(axis=-1),
        terminal_states=x,
        node_sums=(x_sum, x_sq_sum, gap_sum, gap_sq_sum),
        minor_states=states,
        state_average=averages,
    )


def _simulate_chunk(
    paths: Sequence[int],
    params: ValidatedParams,
    plan: ClosedLoopPlan,
    mean_field: np.ndarray,
    N: int,
    seed: int,
    options: SimulationOptions,
) -> _ChunkResult:
    noise = noise_steps(seed, paths, N, plan.grid.size, options.noise_block)
    return euler_paths(params, plan, mean_field, noise, options.keep_paths, options.overflow_cap)


def simulate_population(
    params: ValidatedParams,
    riccati: RiccatiSolution,
    nce: NceSolution,
    N: int,
    n_paths: int,
    seed: int,
    options: Optional[SimulationOptions] = None,
    plan: Optional[ClosedLoopPlan] = None,
) -> PopulationSample:
    """
    Simulate n_paths independent populations of N minor players.

    Raises:
        SimulationInputError: N < 1, n_paths < 1 or a deviator outside the population
        SimulationOverflowError: a state exceeded the overflow cap
    """
    if N < 1 or n_paths < 1:
        raise SimulationInputError(f"N and n_paths must be >= 1, got N={N}, n_paths={n_paths}")
    options = options or SimulationOptions()
    plan = plan or equilibrium_plan(params, riccati, nce)
    plan.grid.require_same(nce.grid, "simulation grid")
    if plan.deviator is not None and not 0 <= plan.deviator < N:
        raise SimulationInputError(f"deviating player {plan.deviator} outside 0..{N - 1}")

    mean_field = discrete_mean_field(params, plan)
    size = max(1, int(options.chunk_size))
    chunks = [range(a, min(a + size, n_paths)) for a in range(0, n_paths, size)]
    run = partial(
        _simulate_chunk,
        params=params,
        plan=plan,
        mean_field=mean_field,
        N=N,
        seed=seed,
        options=options,
    )

    progress = dict(total=len(chunks), desc=f"N={N}", disable=not options.progress, leave=False)
    if options.workers > 1:
        with ThreadPoolExecutor(max_workers=options.workers) as pool:
            results: List[_ChunkResult] = list(tqdm(pool.map(run, chunks), **progress))
    else:
        results = [run(chunk) for chunk in tqdm(chunks, **progress)]

    sums = [np.sum(np.stack([r.node_sums[i] for r in results]), axis=0) for i in range(4)]
    keep = options.keep_paths
    sample = PopulationSample(
        N=N,
        n_paths=n_paths,
        seed=seed,
        grid=plan.grid,
        major_state=plan.x0,
        major_control=plan.u0,
        mean_field=mean_field,
        major_costs=np.concatenate([r.major_costs for r in results]),
        minor_costs=np.concatenate([r.minor_costs for r in results]),
        limiting_costs=np.concatenate([r.limiting_costs for r in results]),
        control_energy=np.concatenate([r.control_energy for r in results]),
        strategy_gap=np.concatenate([r.strategy_gap for r in results]),
        terminal_states=np.concatenate([r.terminal_states for r in results]),
        node_stats=NodeStatistics(n_paths, N, *sums),
        minor_states=np.concatenate([r.minor_states for r in results]) if keep else None,
        state_average=np.concatenate([r.state_average for r in results]) if keep else None,
    )
    logger.info(
        f"Simulated N={N}, n_paths={n_paths} on M={plan.grid.M} steps "
        f"({len(chunks)} chunks, workers={options.workers})"
    )
    return sample


def feedback_controls(
    sample: PopulationSample, params: ValidatedParams, plan: ClosedLoopPlan
) -> np.ndarray:
    """Controls along retained trajectories, shape (n_paths, M+1, N)."""
    if sample.minor_states is None:
        raise ValueError("controls need retained trajectories (keep_paths=True)")
    K = params.gain_scale * plan.P
    c = params.gain_scale * plan.k
    u = -(K[None, :, None] * sample.minor_states + c[None, :, None])
    if plan.deviator is not None:
        i = plan.deviator
        u[:, :, i] = plan.law.apply(u[:, :, i], plan.grid.nodes)
    return u


def standard_error(values: np.ndarray, axis: int = 0) -> np.ndarray:
    """Sample standard deviation over `axis` divided by sqrt(count); 0 for one sample."""
    n = values.shape[axis]
    if n < 2:
        return np.zeros(np.delete(values.shape, axis)) if values.ndim > 1 else np.float64(0.0)
    return np.std(values, axis=axis, ddof=1) / np.sqrt(n)


@dataclass(frozen=True)
class CostReport:
    N: int
    n_paths: int
    seed: int
    J0_emp: float
    J0_se: float
    Ji_emp: np.ndarray
    Ji_se: np.ndarray
    Ji_emp_mean: float
    Ji_mean_se: float
    J0_bar: float
    Ji_bar: float
    Ji_twin_mean: float
    Ji_twin_se: float

    @property
    def gap_major(self) -> float:
        return abs(self.J0_emp - self.J0_bar)

    @property
    def gap_minor(self) -> float:
        return abs(self.Ji_emp_mean - self.Ji_bar)


def empirical_costs(
    sample: PopulationSample,
    params: ValidatedParams,
    riccati: RiccatiSolution,
    nce: NceSolution,
) -> CostReport:
    """Path-averaged finite-N costs next to their limiting values."""
    sample.grid.require_same(nce.grid, "sample grid")
    per_path_minor = sample.minor_costs.mean(axis=1)
    per_path_twin = sample.limiting_costs.mean(axis=1)
    moments = solve_moments(params, riccati, nce)

    return CostReport(
        N=sample.N,
        n_paths=sample.n_paths,
        seed=sample.seed,
        J0_emp=float(sample.major_costs.mean()),
        J0_se=float(standard_error(sample.major_costs)),
        Ji_emp=sample.minor_costs.mean(axis=0),
        Ji_se=standard_error(sample.minor_costs),
        Ji_emp_mean=float(per_path_minor.mean()),
        Ji_mean_se=float(standard_error(per_path_minor)),
        J0_bar=limiting_cost_major(params, nce),
        Ji_bar=limiting_cost_minor(params, riccati, nce, moments),
        Ji_twin_mean=float(per_path_twin.mean()),
        Ji_twin_se=float(standard_error(per_path_twin)),
    )


def state_average_gap(sample: PopulationSample, nce: NceSolution) -> float:
    """
    max over nodes of the path average of (x^(N) - m_h)^2.

    m_h is `sample.mean_field`, the Euler recursion of the mean-field equation
    under the simulated plan (the deviated one for a deviation run), not the
    NCE mean field; the O(h) distance between the two is `mean_field_bias`.
    `nce` only pins the time grid.
    """
    sample.grid.require_same(nce.grid, "sample grid")
    return float(np.max(sample.node_stats.avg_gap_sq))


def state_average_gap_se(sample: PopulationSample) -> float:
    """Standard error of the gap statistic at the node where it peaks."""
    stats = sample.node_stats
    return float(stats.avg_gap_se[int(np.argmax(stats.avg_gap_sq))])


def mean_field_bias(sample: PopulationSample, nce: NceSolution) -> float:
    """max |Euler mean field - NCE mean field|, the time discretization bias of the simulator."""
    return float(np.max(np.abs(sample.mean_field - nce.xbar)))


def discrete_limiting_major_cost(sample: PopulationSample, params: ValidatedParams) -> float:
    """Major cost along the Euler mean field, the same-scheme comparator of J0_emp."""
    return major_cost(params, sample.grid, sample.major_state, sample.mean_field, sample.major_control)
