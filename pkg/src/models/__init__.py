"""models package."""

from src.models.controls import EQUILIBRIUM, FeedbackPerturbation
from src.models.grid import TimeGrid, build_time_grid
from src.models.params import ModelParams, ValidatedParams, check_params, validate_params

__all__ = [
    "EQUILIBRIUM",
    "FeedbackPerturbation",
    "ModelParams",
    "TimeGrid",
    "ValidatedParams",
    "build_time_grid",
    "check_params",
    "validate_params",
]
