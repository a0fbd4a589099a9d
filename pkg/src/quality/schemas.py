"""
Artifact Schemas
================

Pandera (polars backend) schemas for every CSV the harness writes. Column
names and order are fixed here; `validate_frame` runs before any bytes reach
the store, so a malformed table never lands on disk.
"""

from typing import Dict

import pandera.polars as pa
import polars as pl
from pandera.errors import SchemaError, SchemaErrors

from src.utils.errors import MfgError


class ArtifactSchemaError(MfgError, ValueError):
    code = "artifact_schema"


def _float(*checks, nullable: bool = False) -> pa.Column:
    return pa.Column(pl.Float64, checks=list(checks), nullable=nullable)


def _nonneg(nullable: bool = False) -> pa.Column:
    return _float(pa.Check.ge(0.0), nullable=nullable)


def _schema(name: str, columns: Dict[str, pa.Column]) -> pa.DataFrameSchema:
    return pa.DataFrameSchema(columns, name=name, strict=True, ordered=True)


RICCATI_SCHEMA = _schema(
    "riccati",
    {"t": _nonneg(), "P": _nonneg()},
)

NCE_SCHEMA = _schema(
    "nce",
    {
        "t": _nonneg(),
        "x0_hat": _float(),
        "xbar": _float(),
        "k": _float(),
        "p0": _float(),
        "p": _float(),
        "q": _float(),
        "u0": _float(),
    },
)

MOMENTS_SCHEMA = _schema(
    "moments",
    {"t": _nonneg(), "mu": _float(), "v": _nonneg()},
)

COSTS_SCHEMA = _schema(
    "costs",
    {
        "N": pa.Column(pl.Int64, pa.Check.ge(1)),
        "n_paths": pa.Column(pl.Int64, pa.Check.ge(1)),
        "seed": pa.Column(pl.UInt64),
        "J0_emp": _nonneg(),
        "J0_bar": _nonneg(),
        "Ji_emp_mean": _nonneg(),
        "Ji_bar": _nonneg(),
        "gap_major": _nonneg(),
        "gap_minor": _nonneg(),
        "avg_gap_sq": _nonneg(),
        "se_J0_emp": _nonneg(),
        "se_Ji_emp_mean": _nonneg(),
        "se_avg_gap_sq": _nonneg(),
    },
)

GAP_SCHEMA = _schema(
    "gap",
    {
        "target": pa.Column(pl.String, pa.Check.isin(["major", "minor"])),
        "kind": pa.Column(
            pl.String, pa.Check.isin(["feedback-scale", "constant-offset", "time-window-pulse"])
        ),
        "theta": _float(),
        "window": pa.Column(pl.String),
        "N": pa.Column(pl.Int64, pa.Check.ge(1)),
        "J_base": _nonneg(nullable=True),
        "J_dev": _nonneg(nullable=True),
        "delta": _float(nullable=True),
        "se": _nonneg(nullable=True),
        "epsilon_hat": _nonneg(),
        "J_bar_base": _nonneg(nullable=True),
        "J_bar_dev": _nonneg(nullable=True),
        "avg_gap_sq": _nonneg(nullable=True),
        "status": pa.Column(pl.String),
    },
)

CONVERGENCE_SCHEMA = _schema(
    "convergence",
    {
        "N": pa.Column(pl.Int64, pa.Check.ge(1)),
        "n_paths": pa.Column(pl.Int64, pa.Check.ge(1)),
        "seed": pa.Column(pl.UInt64),
        "avg_gap_sq": _nonneg(nullable=True),
        "se_avg_gap_sq": _nonneg(nullable=True),
        "cost_gap_major": _nonneg(nullable=True),
        "se_cost_gap_major": _nonneg(nullable=True),
        "cost_gap_minor": _nonneg(nullable=True),
        "se_cost_gap_minor": _nonneg(nullable=True),
        "strategy_gap": _nonneg(nullable=True),
        "se_strategy_gap": _nonneg(nullable=True),
        "control_energy": _nonneg(nullable=True),
        "se_control_energy": _nonneg(nullable=True),
        "status": pa.Column(pl.String),
    },
)

SLOPES_SCHEMA = _schema(
    "slopes",
    {
        "column": pa.Column(pl.String),
        "slope": _float(nullable=True),
        "intercept": _float(nullable=True),
        "r2": _float(nullable=True),
        "envelope_power": _float(),
        "envelope_ratio": _float(nullable=True),
        "status": pa.Column(pl.String),
    },
)

PATHS_SCHEMA = _schema(
    "paths",
    {
        "path": pa.Column(pl.Int64, pa.Check.ge(0)),
        "player": pa.Column(pl.Int64, pa.Check.ge(0)),
        "t": _nonneg(),
        "x": _float(),
    },
)

SCHEMAS = {
    "riccati.csv": RICCATI_SCHEMA,
    "nce.csv": NCE_SCHEMA,
    "moments.csv": MOMENTS_SCHEMA,
    "costs.csv": COSTS_SCHEMA,
    "gap.csv": GAP_SCHEMA,
    "convergence.csv": CONVERGENCE_SCHEMA,
    "slopes.csv": SLOPES_SCHEMA,
    "paths.csv": PATHS_SCHEMA,
}


def validate_frame(name: str, frame: pl.DataFrame) -> pl.DataFrame:
    """Validate `frame` against the schema registered for artifact `name`."""
    try:
        schema = SCHEMAS[name]
    except KeyError as e:
        raise ArtifactSchemaError(f"No schema registered for artifact {name}") from e
    try:
        return schema.validate(frame)
    except (SchemaError, SchemaErrors) as e:
        raise ArtifactSchemaError(f"{name} failed schema validation: {e}") from e
