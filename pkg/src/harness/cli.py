"""
Command-Line Interface
======================

    mfg --config configs/default.yaml --out results nce
    mfg --config configs/default.yaml study --Ns 8,32,128,512

Every subcommand writes `summary.json` (config echo, diagnostics, check
verdicts, artifact list). Any library error is written to `errors.json` and
stderr as a JSON record. Exit status is 0 only when every check passed.
"""

import json
import os
import sys
from dataclasses import asdict
from typing import Dict, List, Optional

import click
from dotenv import load_dotenv
from loguru import logger

from src.harness.config import RunConfig, load_config
from src.harness.export import (
    convergence_frame,
    costs_frame,
    gap_frame,
    moments_frame,
    nce_frame,
    paths_frame,
    riccati_frame,
    slopes_frame,
    write_frame,
    write_json,
)
from src.harness.pipeline import solve_model, solve_riccati_only
from src.harness.study import run_convergence_study, run_gap_study, slope_report
from src.models.params import check_params
from src.simulation.nash import Target
from src.simulation.population import (
    SimulationOptions,
    empirical_costs,
    mean_field_bias,
    simulate_population,
    state_average_gap,
    state_average_gap_se,
)
from src.simulation.rng import derive_seed
from src.storage.storage_interface import DataStore, get_storage
from src.utils.errors import MfgError
from src.utils.logging import configure_logging

DEFAULT_CONFIG = "configs/default.yaml"


def _parse_ns(text: Optional[str]) -> Optional[List[int]]:
    if text is None:
        return None
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise click.BadParameter(f"expected comma-separated integers, got {text!r}") from e


class Run:
    """Per-invocation state: config, store, artifacts written so far."""

    def __init__(self, config: RunConfig, store: DataStore, command: str):
        self.config = config
        self.store = store
        self.command = command
        self.artifacts: List[str] = []

    @property
    def options(self) -> SimulationOptions:
        sim = self.config.simulation
        return SimulationOptions(
            workers=sim.workers, chunk_size=sim.chunk_size, overflow_cap=sim.overflow_cap
        )

    def frame(self, key: str, frame) -> None:
        self.artifacts.append(write_frame(self.store, key, frame))

    def finish(self, checks: Dict[str, bool], results: Optional[dict] = None) -> None:
        passed = all(checks.values())
        summary = {
            "command": self.command,
            "config": self.config.echo(),
            "checks": checks,
            "passed": passed,
            "results": results or {},
            "artifacts": sorted(self.artifacts + ["summary.json"]),
        }
        write_json(self.store, "summary.json", summary)
        if not passed:
            failed = sorted(name for name, ok in checks.items() if not ok)
            logger.error(f"{self.command}: checks failed: {failed}")
            sys.exit(1)
        logger.info(f"{self.command}: all checks passed")


def _fail(store: Optional[DataStore], error: MfgError) -> None:
    record = error.to_record()
    click.echo(json.dumps(record, sort_keys=True), err=True)
    if store is not None:
        write_json(store, "errors.json", {"errors": [record]})
    sys.exit(1)


def _run(ctx: click.Context, command: str, body) -> None:
    """Load config and store, run `body(run)`, turn library errors into records."""
    obj = ctx.obj
    store = None
    try:
        store = get_storage(base_path=obj["out"])
        config = load_config(obj["config"]).with_overrides(seed=obj["seed"], workers=obj["workers"])
        body(Run(config, store, command))
    except MfgError as e:
        logger.error(f"{command} failed: {e}")
        _fail(store, e)


@click.group()
@click.option("--config", "config_path", default=DEFAULT_CONFIG, show_default=True, help="YAML run config")
@click.option("--out", default=None, help="Output directory (default: $MFG_OUTPUT_DIR or ./results)")
@click.option("--seed", type=int, default=None, help="Override simulation.seed")
@click.option("--workers", type=int, default=None, help="Override simulation.workers")
@click.option("--log-level", default=None, help="Log level (default: $MFG_LOG_LEVEL or INFO)")
@click.pass_context
def cli(ctx, config_path, out, seed, workers, log_level):
    """Major-minor mean-field LQG game: solve, simulate, verify."""
    load_dotenv()
    configure_logging(log_level or os.getenv("MFG_LOG_LEVEL", "INFO"))
    ctx.obj = {"config": config_path, "out": out, "seed": seed, "workers": workers}


@cli.command()
@click.pass_context
def validate(ctx):
    """Check the model parameters against the standing sign conditions."""

    def body(run: Run):
        violations = check_params(run.config.model)
        if violations:
            record = {"error": "invalid_params", "message": "; ".join(violations), "violations": violations}
            click.echo(json.dumps(record, sort_keys=True), err=True)
            write_json(run.store, "errors.json", {"errors": [record]})
            run.artifacts.append("errors.json")
        run.finish({"params_valid": not violations}, {"violations": violations})

    _run(ctx, "validate", body)


@cli.command()
@click.pass_context
def riccati(ctx):
    """Solve the Riccati equation; writes riccati.csv."""

    def body(run: Run):
        params, sol, diag = solve_riccati_only(run.config)
        run.frame("riccati.csv", riccati_frame(sol))
        run.finish(diag.checks(run.config.tolerances), {"riccati": asdict(diag)})

    _run(ctx, "riccati", body)


@cli.command()
@click.pass_context
def nce(ctx):
    """Solve Riccati, NCE system and limiting moments; writes riccati/nce/moments CSVs."""

    def body(run: Run):
        model = solve_model(run.config)
        run.frame("riccati.csv", riccati_frame(model.riccati))
        run.frame("nce.csv", nce_frame(model.nce))
        run.frame("moments.csv", moments_frame(model.moments))
        run.finish(model.checks(), {"diagnostics": model.diagnostics.to_dict()})

    _run(ctx, "nce", body)


@cli.command()
@click.option("--N", "N", type=int, default=None, help="Number of minor players")
@click.option("--paths", "n_paths", type=int, default=None, help="Monte Carlo paths")
@click.option("--paths-csv", is_flag=True, help="Also write paths.csv (small runs only)")
@click.pass_context
def simulate(ctx, N, n_paths, paths_csv):
    """Simulate the population under the decentralized strategies; writes costs.csv."""

    def body(run: Run):
        run.config = run.config.with_overrides(N=N, n_paths=n_paths)
        sim = run.config.simulation
        model = solve_model(run.config)
        options = SimulationOptions(
            workers=sim.workers,
            chunk_size=sim.chunk_size,
            overflow_cap=sim.overflow_cap,
            keep_paths=paths_csv,
        )
        seed = derive_seed(sim.seed, "simulate", sim.N)
        sample = simulate_population(
            model.params, model.riccati, model.nce, sim.N, sim.n_paths, seed, options
        )
        report = empirical_costs(sample, model.params, model.riccati, model.nce)
        gap = (state_average_gap(sample, model.nce), state_average_gap_se(sample))
        run.frame("costs.csv", costs_frame([report], [gap]))
        if paths_csv:
            run.frame("paths.csv", paths_frame(sample))
        results = {
            "diagnostics": model.diagnostics.to_dict(),
            "seed": seed,
            "mean_field_bias": mean_field_bias(sample, model.nce),
            "control_energy": float(sample.control_energy.mean()),
        }
        run.finish(model.checks(), results)

    _run(ctx, "simulate", body)


@cli.command()
@click.option("--family", type=click.Choice(["default", "suboptimal"]), default=None)
@click.option("--target", type=click.Choice(["major", "minor", "both"]), default=None)
@click.option("--Ns", "ns", default=None, help="Comma-separated N values (overrides gap.N_list)")
@click.option("--paths", "n_paths", type=int, default=None, help="Monte Carlo paths")
@click.pass_context
def gap(ctx, family, target, ns, n_paths):
    """Estimate the equilibrium gap over a deviation family; writes gap.csv."""

    def body(run: Run):
        run.config = run.config.with_overrides(n_paths=n_paths, gap_N_list=_parse_ns(ns))
        cfg = run.config.gap
        targets = cfg.targets if target is None else (["major", "minor"] if target == "both" else [target])
        model = solve_model(run.config)
        reports = run_gap_study(
            model.params,
            model.riccati,
            model.nce,
            cfg.N_list,
            run.config.simulation.n_paths,
            run.config.simulation.seed,
            family=family or cfg.family,
            targets=targets,
            minor_index=cfg.minor_index,
            responder_k=cfg.responder_k,
            options=run.options,
        )
        run.frame("gap.csv", gap_frame(reports))
        epsilon = {str(r.N): {t: r.epsilon_for(Target(t)) for t in targets} for r in reports}
        checks = model.checks()
        checks["null_deviation_exact"] = all(
            e.delta == 0.0 for r in reports for e in r.entries if e.spec.is_null and e.ok
        )
        run.finish(checks, {"diagnostics": model.diagnostics.to_dict(), "epsilon_hat": epsilon})

    _run(ctx, "gap", body)


@cli.command()
@click.option("--Ns", "ns", default=None, help="Comma-separated N values (overrides study.N_list)")
@click.option("--paths", "n_paths", type=int, default=None, help="Monte Carlo paths")
@click.pass_context
def study(ctx, ns, n_paths):
    """Convergence table across N with log-log slope fits; writes convergence.csv and slopes.csv."""

    def body(run: Run):
        run.config = run.config.with_overrides(n_paths=n_paths, study_N_list=_parse_ns(ns))
        N_list = run.config.study.N_list
        model = solve_model(run.config)
        table = run_convergence_study(
            model.params,
            model.riccati,
            model.nce,
            N_list,
            run.config.simulation.n_paths,
            run.config.simulation.seed,
            run.options,
        )
        slopes = slope_report(table)
        run.frame("convergence.csv", convergence_frame(table))
        run.frame("slopes.csv", slopes_frame(slopes))
        checks = model.checks()
        checks["study_rows_ok"] = all(r.status == "ok" for r in table.rows)
        run.finish(checks, {"diagnostics": model.diagnostics.to_dict(), "N_list": N_list})

    _run(ctx, "study", body)


def main():
    cli(obj={})


if __name__ == "__main__":
    main()
