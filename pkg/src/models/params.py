"""
Model Parameters
================

All problem data of the major-minor game: coefficients of the major player's
backward dynamics, the minor players' forward dynamics, both cost functionals,
the horizon, the (deterministic) terminal value of the major state and the
law of the minor initial states.

`ModelParams` only checks types. The sign conditions the solvers rely on are
checked by `check_params` / `validate_params`, which report every violated
condition by name instead of stopping at the first one.
"""

from typing import List

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from src.utils.errors import ParameterValidationError


class ModelParams(BaseModel):
    """Scalar coefficients of the game. Immutable once built."""

    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)

    # Major player: dx0 = [A0 x0 + B0 u0 + C0 z0] dt + z0 dW0, x0(T) = xi
    A0: float = Field(description="major drift coefficient")
    B0: float = Field(description="major control coefficient")
    C0: float = Field(0.0, description="major diffusion-feedback coefficient")

    # Minor player: dxi = [A xi + B ui + D x^(N) + alpha x0] dt + sigma dWi
    A: float = Field(description="minor drift coefficient")
    B: float = Field(description="minor control coefficient")
    D: float = Field(description="state-average coupling")
    alpha: float = Field(description="major-state coupling")
    sigma: float = Field(description="minor diffusion coefficient")

    # Cost weights
    Q0: float
    R0: float
    H0: float
    Q: float
    R: float
    H: float

    T: float = Field(description="horizon length")
    xi: float = Field(description="terminal value of the major state")
    x_mean: float = Field(description="mean of the minor initial states")
    x_var: float = Field(description="variance of the minor initial states")


class ValidatedParams(ModelParams):
    """ModelParams that passed `validate_params`. Only build through it."""

    @property
    def s(self) -> float:
        """B^2 / R, the minor feedback intensity."""
        return self.B**2 / self.R

    @property
    def s0(self) -> float:
        """B0^2 / R0, the major feedback intensity."""
        return self.B0**2 / self.R0

    @property
    def gain_scale(self) -> float:
        """B / R: the minor feedback is u = -(B/R)(P x + k)."""
        return self.B / self.R


def check_params(params: ModelParams) -> List[str]:
    """Return the names of all violated conditions (empty when valid)."""
    violations = []

    for name in ("Q0", "H0", "Q", "H"):
        if getattr(params, name) < 0:
            violations.append(f"{name} must be >= 0")
    for name in ("R0", "R"):
        if getattr(params, name) <= 0:
            violations.append(f"{name} must be > 0")

    if params.B0 == 0:
        violations.append(
            "B0 must be nonzero (required for unique solvability of the NCE system)"
        )
    if params.T <= 0:
        violations.append("T must be > 0")
    if params.x_var < 0:
        violations.append("x_var must be >= 0")

    return violations


def validate_params(params: ModelParams) -> ValidatedParams:
    """
    Check the standing sign conditions and tag the parameters as valid.

    Raises:
        ParameterValidationError: listing every violated condition.
    """
    violations = check_params(params)
    if violations:
        logger.error(f"Parameter validation failed: {violations}")
        raise ParameterValidationError(violations)

    if params.C0 != 0:
        logger.warning(
            f"C0={params.C0} only enters through z0 and the p0 volatility; "
            "both drop out with a deterministic terminal value"
        )

    validated = ValidatedParams(**params.model_dump())
    logger.debug(f"Parameters validated (T={validated.T}, B0={validated.B0})")
    return validated
