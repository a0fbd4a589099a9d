"""
Run Configuration
=================

A run is described by one YAML file with six sections:

    model:       the ModelParams fields, nothing else
    grid:        {M}
    simulation:  {N, n_paths, seed, workers, chunk_size, overflow_cap}
    study:       {N_list}
    gap:         {N_list, family, targets, minor_index, responder_k}
    tolerances:  acceptance thresholds for the diagnostics

Unknown keys are rejected at every level. Parameter sign conditions are not
checked here; `validate_params` reports them by name.
"""

from pathlib import Path
from typing import List, Literal, Optional

import yaml
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.models.params import ModelParams
from src.utils.errors import ConfigError


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _strictly_increasing(values: List[int]) -> List[int]:
    if values and values[0] < 1:
        raise ValueError(f"N values must be >= 1, got {values}")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError(f"N values must be strictly increasing, got {values}")
    return values


class GridConfig(_Section):
    M: int = Field(2000, ge=2)


class SimulationConfig(_Section):
    N: int = Field(64, ge=1)
    n_paths: int = Field(400, ge=1)
    seed: int = Field(20240601, ge=0)
    workers: int = Field(1, ge=1)
    chunk_size: int = Field(50, ge=1)
    overflow_cap: float = Field(1e8, gt=0)


class StudyConfig(_Section):
    N_list: List[int] = Field(default_factory=lambda: [8, 32, 128, 512], min_length=1)

    @field_validator("N_list")
    @classmethod
    def _increasing(cls, v):
        return _strictly_increasing(v)


class GapConfig(_Section):
    N_list: List[int] = Field(default_factory=lambda: [16, 64, 256], min_length=1)
    family: Literal["default", "suboptimal"] = "default"
    targets: List[Literal["major", "minor"]] = Field(default_factory=lambda: ["major", "minor"])
    minor_index: int = Field(0, ge=0)
    responder_k: Literal["recomputed", "frozen"] = "recomputed"

    @field_validator("N_list")
    @classmethod
    def _increasing(cls, v):
        return _strictly_increasing(v)

    @model_validator(mode="after")
    def _index_in_every_population(self):
        if self.minor_index >= self.N_list[0]:
            raise ValueError(
                f"minor_index {self.minor_index} outside the smallest population N={self.N_list[0]}"
            )
        return self


class Tolerances(_Section):
    riccati_residual: float = 1e-6
    nce_residual: float = 1e-6
    boundary: float = 1e-10
    consistency: float = 1e-6
    moment_identity: float = 1e-10
    condition_number: float = 1e10
    riccati_cap: float = 1e12


class RunConfig(_Section):
    model: ModelParams
    grid: GridConfig = Field(default_factory=GridConfig)
    simulation: SimulationConfig = Field(default_factory=SimulationConfig)
    study: StudyConfig = Field(default_factory=StudyConfig)
    gap: GapConfig = Field(default_factory=GapConfig)
    tolerances: Tolerances = Field(default_factory=Tolerances)

    def with_overrides(
        self,
        seed: Optional[int] = None,
        workers: Optional[int] = None,
        N: Optional[int] = None,
        n_paths: Optional[int] = None,
        M: Optional[int] = None,
        study_N_list: Optional[List[int]] = None,
        gap_N_list: Optional[List[int]] = None,
    ) -> "RunConfig":
        """Copy with CLI overrides applied (None leaves a value unchanged)."""
        updates = {
            key: value
            for key, value in dict(seed=seed, workers=workers, N=N, n_paths=n_paths).items()
            if value is not None
        }
        data = self.model_dump()
        data["simulation"].update(updates)
        if M is not None:
            data["grid"]["M"] = M
        if study_N_list is not None:
            data["study"]["N_list"] = list(study_N_list)
        if gap_N_list is not None:
            data["gap"]["N_list"] = list(gap_N_list)
        return parse_config(data)

    def echo(self) -> dict:
        """Settings that determine results (worker count excluded)."""
        data = self.model_dump()
        data["simulation"].pop("workers")
        return data


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e


def load_config(path) -> RunConfig:
    """
    Read and validate a YAML run configuration.

    Raises:
        ConfigError: missing file, malformed YAML, unknown or mistyped keys
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ConfigError(f"Malformed YAML in {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config {path} must be a mapping with a 'model' section")

    config = parse_config(data)
    logger.info(f"Loaded config {path} (M={config.grid.M}, seed={config.simulation.seed})")
    return config
