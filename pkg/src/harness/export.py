"""
Artifact Export
===============

Builds polars frames for every artifact, validates them against the pandera
schemas and hands the bytes to a DataStore. Frames never depend on execution
order, and nothing time-dependent is written, so identical runs produce
identical files.
"""

import json
import math
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
import polars as pl

from src.harness.study import ConvergenceTable
from src.quality.schemas import validate_frame
from src.simulation.nash import GapReport
from src.simulation.population import CostReport, PopulationSample
from src.storage.storage_interface import DataStore

RUN_ID_COLUMNS = {
    "N": pl.Int64,
    "n_paths": pl.Int64,
    "seed": pl.UInt64,
}

CONVERGENCE_VALUE_COLUMNS = [
    f"{prefix}{name}"
    for name in ("avg_gap_sq", "cost_gap_major", "cost_gap_minor", "strategy_gap", "control_energy")
    for prefix in ("", "se_")
]


def _columns_frame(columns: Dict[str, np.ndarray]) -> pl.DataFrame:
    return pl.DataFrame({name: np.asarray(values, dtype=float) for name, values in columns.items()})


def _records_frame(records: List[Dict], overrides: Optional[Dict[str, Any]] = None) -> pl.DataFrame:
    """Frame from row dicts; NaN floats become nulls."""
    frame = pl.DataFrame(records, schema_overrides=overrides or {}, infer_schema_length=None)
    floats = [name for name, dtype in frame.schema.items() if dtype == pl.Float64]
    return frame.with_columns([pl.col(name).fill_nan(None) for name in floats])


def riccati_frame(riccati) -> pl.DataFrame:
    return _columns_frame(riccati.to_columns())


def nce_frame(nce) -> pl.DataFrame:
    return _columns_frame(nce.to_columns())


def moments_frame(moments) -> pl.DataFrame:
    return _columns_frame(moments.to_columns())


def costs_frame(reports: Iterable[CostReport], avg_gaps: Iterable[tuple]) -> pl.DataFrame:
    records = []
    for report, (gap, gap_se) in zip(reports, avg_gaps):
        records.append(
            {
                "N": report.N,
                "n_paths": report.n_paths,
                "seed": report.seed,
                "J0_emp": report.J0_emp,
                "J0_bar": report.J0_bar,
                "Ji_emp_mean": report.Ji_emp_mean,
                "Ji_bar": report.Ji_bar,
                "gap_major": report.gap_major,
                "gap_minor": report.gap_minor,
                "avg_gap_sq": gap,
                "se_J0_emp": report.J0_se,
                "se_Ji_emp_mean": report.Ji_mean_se,
                "se_avg_gap_sq": gap_se,
            }
        )
    return _records_frame(records, RUN_ID_COLUMNS)


def gap_frame(reports: Iterable[GapReport]) -> pl.DataFrame:
    records = [row for report in reports for row in report.rows()]
    return _records_frame(
        records,
        {
            "theta": pl.Float64,
            "N": pl.Int64,
            "J_base": pl.Float64,
            "J_dev": pl.Float64,
            "delta": pl.Float64,
            "se": pl.Float64,
            "epsilon_hat": pl.Float64,
            "J_bar_base": pl.Float64,
            "J_bar_dev": pl.Float64,
            "avg_gap_sq": pl.Float64,
        },
    )


def convergence_frame(table: ConvergenceTable) -> pl.DataFrame:
    overrides = {name: pl.Float64 for name in CONVERGENCE_VALUE_COLUMNS}
    overrides.update(RUN_ID_COLUMNS)
    return _records_frame(table.records(), overrides)


def slopes_frame(report: List[Dict]) -> pl.DataFrame:
    return _records_frame(
        report,
        {
            "slope": pl.Float64,
            "intercept": pl.Float64,
            "r2": pl.Float64,
            "envelope_power": pl.Float64,
            "envelope_ratio": pl.Float64,
        },
    )


def paths_frame(sample: PopulationSample) -> pl.DataFrame:
    """Long format (path, player, t, x) of retained trajectories."""
    if sample.minor_states is None:
        raise ValueError("paths export needs retained trajectories (keep_paths=True)")
    n, size, N = sample.minor_states.shape
    path, node, player = np.meshgrid(np.arange(n), np.arange(size), np.arange(N), indexing="ij")
    return pl.DataFrame(
        {
            "path": path.ravel().astype(np.int64),
            "player": player.ravel().astype(np.int64),
            "t": sample.grid.nodes[node.ravel()],
            "x": sample.minor_states.ravel(),
        }
    ).sort(["path", "player", "t"])


def write_frame(store: DataStore, key: str, frame: pl.DataFrame) -> str:
    """Validate against the schema named by `key` and write as CSV."""
    validate_frame(key.rsplit("/", 1)[-1], frame)
    store.write(key, frame.write_csv(float_precision=None).encode())
    return key


def _json_safe(value):
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_json(store: DataStore, key: str, payload: Dict[str, Any]) -> str:
    text = json.dumps(_json_safe(payload), indent=2, sort_keys=True)
    store.write(key, (text + "\n").encode())
    return key
