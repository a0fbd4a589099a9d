"""
Convergence and Gap Studies
===========================

Sweeps over the population size N. Each N gets its own seed derived from the
master seed, so any single row can be reproduced on its own.

Convergence rows compare every simulated run with its limiting comparators
driven by the same noise: the Euler mean field for the state average and the
major cost, and the limiting twins for the minor costs and controls.
"""

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from src.models.params import ValidatedParams
from src.simulation.nash import (
    GapReport,
    Target,
    deviation_family,
    evaluate_family,
)
from src.simulation.population import (
    SimulationOptions,
    discrete_limiting_major_cost,
    simulate_population,
    standard_error,
    state_average_gap,
    state_average_gap_se,
)
from src.simulation.rng import derive_seed
from src.solvers.nce import NceSolution
from src.solvers.riccati import RiccatiSolution
from src.utils.errors import MfgError, RateFitError

GAP_COLUMNS = ("avg_gap_sq", "cost_gap_major", "cost_gap_minor", "strategy_gap")


@dataclass
class ConvergenceRow:
    N: int
    n_paths: int
    seed: int
    avg_gap_sq: Optional[float] = None
    se_avg_gap_sq: Optional[float] = None
    cost_gap_major: Optional[float] = None
    se_cost_gap_major: Optional[float] = None
    cost_gap_minor: Optional[float] = None
    se_cost_gap_minor: Optional[float] = None
    strategy_gap: Optional[float] = None
    se_strategy_gap: Optional[float] = None
    control_energy: Optional[float] = None
    se_control_energy: Optional[float] = None
    status: str = "ok"
    message: str = ""


@dataclass
class ConvergenceTable:
    rows: List[ConvergenceRow] = field(default_factory=list)

    def column(self, name: str) -> Tuple[np.ndarray, np.ndarray]:
        """(N, values) over the successful rows."""
        ok = [r for r in self.rows if r.status == "ok"]
        return (
            np.array([r.N for r in ok], dtype=float),
            np.array([getattr(r, name) for r in ok], dtype=float),
        )

    def records(self) -> List[Dict]:
        return [{k: v for k, v in asdict(r).items() if k != "message"} for r in self.rows]


def convergence_row(
    params: ValidatedParams,
    riccati: RiccatiSolution,
    nce: NceSolution,
    N: int,
    n_paths: int,
    seed: int,
    options: Optional[SimulationOptions] = None,
) -> ConvergenceRow:
    sample = simulate_population(params, riccati, nce, N, n_paths, seed, options)

    major_comparator = discrete_limiting_major_cost(sample, params)
    minor_diff = (sample.minor_costs - sample.limiting_costs).mean(axis=1)

    return ConvergenceRow(
        N=N,
        n_paths=n_paths,
        seed=seed,
        avg_gap_sq=state_average_gap(sample, nce),
        se_avg_gap_sq=state_average_gap_se(sample),
        cost_gap_major=abs(float(sample.major_costs.mean()) - major_comparator),
        se_cost_gap_major=float(standard_error(sample.major_costs)),
        cost_gap_minor=abs(float(minor_diff.mean())),
        se_cost_gap_minor=float(standard_error(minor_diff)),
        strategy_gap=float(sample.strategy_gap.mean()),
        se_strategy_gap=float(standard_error(sample.strategy_gap)),
        control_energy=float(sample.control_energy.mean()),
        se_control_energy=float(standard_error(sample.control_energy)),
    )


def run_convergence_study(
    params: ValidatedParams,
    riccati: RiccatiSolution,
    nce: NceSolution,
    N_list: Sequence[int],
    n_paths: int,
    seed: int,
    options: Optional[SimulationOptions] = None,
) -> ConvergenceTable:
    """One row per N; a failing N yields a row with status set and no values."""
    table = ConvergenceTable()
    for N in N_list:
        row_seed = derive_seed(seed, "study", N)
        try:
            row = convergence_row(params, riccati, nce, N, n_paths, row_seed, options)
        except MfgError as e:
            logger.warning(f"Study row N={N} failed: {e}")
            row = ConvergenceRow(N=N, n_paths=n_paths, seed=row_seed, status=e.code, message=str(e))
        else:
            logger.info(f"Study row N={N}: avg_gap_sq={row.avg_gap_sq:.4e}")
        table.rows.append(row)
    return table


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r2: float


def fit_loglog(N: np.ndarray, values: np.ndarray) -> SlopeFit:
    """Least-squares fit of log(value) against log(N)."""
    N = np.asarray(N, dtype=float)
    values = np.asarray(values, dtype=float)
    if N.size < 3:
        raise RateFitError(f"need at least 3 rows for a fit, got {N.size}")
    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise RateFitError("log-log fit needs positive finite values")

    x, y = np.log(N), np.log(values)
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(residual**2) / total if total > 0 else 1.0
    return SlopeFit(float(slope), float(intercept), float(r2))


def fit_loglog_slope(table: ConvergenceTable, column: str) -> SlopeFit:
    N, values = table.column(column)
    try:
        return fit_loglog(N, values)
    except RateFitError as e:
        raise RateFitError(f"{column}: {e}") from e


def envelope_ratio(values, N, power: float) -> float:
    """max/min of value * N^power; near 1 when value decays like N^-power."""
    scaled = np.asarray(values, dtype=float) * np.asarray(N, dtype=float) ** power
    if scaled.size == 0 or np.any(scaled <= 0):
        return float("nan")
    return float(scaled.max() / scaled.min())


ENVELOPE_POWERS = {
    "avg_gap_sq": 1.0,
    "cost_gap_major": 0.5,
    "cost_gap_minor": 0.5,
    "strategy_gap": 1.0,
}


def slope_report(table: ConvergenceTable) -> List[Dict]:
    """Fit and envelope ratio per gap column; unfittable columns keep a status."""
    report = []
    for column in GAP_COLUMNS:
        N, values = table.column(column)
        row = {
            "column": column,
            "slope": None,
            "intercept": None,
            "r2": None,
            "envelope_power": ENVELOPE_POWERS[column],
            "envelope_ratio": None,
            "status": "ok",
        }
        try:
            fit = fit_loglog(N, values)
            row.update(slope=fit.slope, intercept=fit.intercept, r2=fit.r2)
        except RateFitError as e:
            row["status"] = e.code
            logger.warning(f"No slope for {column}: {e}")
        ratio = envelope_ratio(values, N, ENVELOPE_POWERS[column])
        row["envelope_ratio"] = None if np.isnan(ratio) else ratio
        report.append(row)
    return report


def run_gap_study(
    params: ValidatedParams,
    riccati: RiccatiSolution,
    nce: NceSolution,
    N_list: Sequence[int],
    n_paths: int,
    seed: int,
    family: str = "default",
    targets: Sequence[str] = ("major", "minor"),
    minor_index: int = 0,
    responder_k: str = "recomputed",
    options: Optional[SimulationOptions] = None,
) -> List[GapReport]:
    """Deviation family for every requested target at every N, one shared base run per N."""
    specs = []
    for target in targets:
        specs.extend(deviation_family(family, params.T, Target(target), minor_index))

    reports = []
    for N in N_list:
        gap_seed = derive_seed(seed, "gap", N)
        reports.append(
            evaluate_family(params, riccati, nce, specs, N, n_paths, gap_seed, options, responder_k)
        )
    return reports
