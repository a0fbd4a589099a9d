"""
Solve Pipeline
==============

Runs the deterministic part of the model end to end (validation, grid,
Riccati, NCE, limiting moments) and collects the diagnostics every summary
reports.
"""

from dataclasses import asdict, dataclass, field
from typing import Dict

import numpy as np
from loguru import logger

from src.harness.config import RunConfig, Tolerances
from src.models.grid import TimeGrid, build_time_grid
from src.models.params import ValidatedParams, validate_params
from src.solvers.bvp import LinearBvpSystem
from src.solvers.moments import (
    MomentTrajectory,
    limiting_cost_major,
    limiting_cost_minor,
    solve_moments,
)
from src.solvers.nce import NceSolution, assemble_nce, consistency_check, nce_residual, solve_nce
from src.solvers.riccati import (
    RiccatiSolution,
    riccati_residual,
    riccati_upper_bound,
    solve_riccati,
)


@dataclass
class RiccatiDiagnostics:
    residual: float
    P_min: float
    P_max: float
    upper_bound: float

    def checks(self, tol: Tolerances) -> Dict[str, bool]:
        return {
            "riccati_residual": self.residual <= tol.riccati_residual,
            "riccati_nonnegative": self.P_min >= 0.0,
            "riccati_bounded": self.P_max <= self.upper_bound * (1.0 + 1e-9) + 1e-12,
        }


@dataclass
class Diagnostics:
    riccati: RiccatiDiagnostics
    condition_number: float
    nce_residuals: Dict[str, float] = field(default_factory=dict)
    boundary_defects: Dict[str, float] = field(default_factory=dict)
    consistency_xbar: float = 0.0
    consistency_k: float = 0.0
    moment_identity: float = 0.0
    J0_bar: float = 0.0
    Ji_bar: float = 0.0

    def checks(self, tol: Tolerances) -> Dict[str, bool]:
        verdicts = self.riccati.checks(tol)
        verdicts.update(
            {
                "nce_condition_number": self.condition_number < tol.condition_number,
                "nce_residual": max(self.nce_residuals.values(), default=0.0) <= tol.nce_residual,
                "nce_boundary": max(self.boundary_defects.values(), default=0.0) <= tol.boundary,
                "consistency_xbar": self.consistency_xbar <= tol.consistency,
                "consistency_k": self.consistency_k <= tol.consistency,
                "moment_identity": self.moment_identity <= tol.moment_identity,
            }
        )
        return verdicts

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SolvedModel:
    """Deterministic artifacts shared by every simulation of one configuration."""

    config: RunConfig
    params: ValidatedParams
    grid: TimeGrid
    riccati: RiccatiSolution
    system: LinearBvpSystem
    nce: NceSolution
    moments: MomentTrajectory
    diagnostics: Diagnostics

    def checks(self) -> Dict[str, bool]:
        return self.diagnostics.checks(self.config.tolerances)


def diagnose_riccati(params: ValidatedParams, riccati: RiccatiSolution) -> RiccatiDiagnostics:
    return RiccatiDiagnostics(
        residual=riccati_residual(riccati, params),
        P_min=float(np.min(riccati.P)),
        P_max=float(np.max(riccati.P)),
        upper_bound=riccati_upper_bound(params),
    )


def solve_riccati_only(config: RunConfig):
    params = validate_params(config.model)
    grid = build_time_grid(params.T, config.grid.M)
    riccati = solve_riccati(params, grid, escape_cap=config.tolerances.riccati_cap)
    return params, riccati, diagnose_riccati(params, riccati)


def solve_model(config: RunConfig) -> SolvedModel:
    """
    Validate, solve and diagnose the deterministic model.

    Raises:
        ParameterValidationError, GridError, RiccatiEscapeError,
        NceSingularError, NceUnstableError
    """
    params, riccati, riccati_diag = solve_riccati_only(config)
    grid = riccati.grid
    tol = config.tolerances

    system = assemble_nce(params, riccati)
    nce = solve_nce(params, riccati, condition_threshold=tol.condition_number)
    residuals = nce_residual(nce, system)
    consistency = consistency_check(nce, params, riccati)
    moments = solve_moments(params, riccati, nce)

    diagnostics = Diagnostics(
        riccati=riccati_diag,
        condition_number=nce.condition_number,
        nce_residuals=residuals.equations,
        boundary_defects=residuals.boundary,
        consistency_xbar=consistency.xbar,
        consistency_k=consistency.k,
        moment_identity=float(np.max(np.abs(moments.mu - nce.xbar))),
        J0_bar=limiting_cost_major(params, nce),
        Ji_bar=limiting_cost_minor(params, riccati, nce, moments),
    )
    solved = SolvedModel(config, params, grid, riccati, system, nce, moments, diagnostics)

    failed = [name for name, ok in solved.checks().items() if not ok]
    if failed:
        logger.warning(f"Diagnostics outside tolerance: {failed}")
    else:
        logger.info(f"All diagnostics within tolerance (J0_bar={diagnostics.J0_bar:.6g}, Ji_bar={diagnostics.Ji_bar:.6g})")
    return solved
