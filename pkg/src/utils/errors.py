"""
Domain Exceptions
=================

Every failure the library can report carries a short machine code so the CLI
can emit it as a JSON error record. Each class also derives from the builtin
exception a caller would naturally catch (ValueError for bad inputs,
ArithmeticError for numerical breakdown).
"""

from typing import Any, Dict, List


class MfgError(Exception):
    """Base class for all solver, simulation and harness errors."""

    code = "mfg_error"

    def to_record(self) -> Dict[str, Any]:
        """Machine-readable form of the error."""
        return {"error": self.code, "message": str(self)}


class ParameterValidationError(MfgError, ValueError):
    """Raised when model parameters violate one or more standing conditions."""

    code = "invalid_params"

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))

    def to_record(self) -> Dict[str, Any]:
        record = super().to_record()
        record["violations"] = self.violations
        return record


class ConfigError(MfgError, ValueError):
    code = "invalid_config"


class GridError(MfgError, ValueError):
    code = "invalid_grid"


class GridMismatchError(MfgError, ValueError):
    code = "grid_mismatch"


class RiccatiEscapeError(MfgError, ArithmeticError):
    code = "riccati_escape"


class NceSingularError(MfgError, ArithmeticError):
    code = "nce_singular"


class NceUnstableError(MfgError, ArithmeticError):
    code = "nce_unstable"


class SimulationInputError(MfgError, ValueError):
    """Population size, path count or deviating player out of range."""

    code = "invalid_simulation"


class SimulationOverflowError(MfgError, ArithmeticError):
    code = "simulation_overflow"


class RateFitError(MfgError, ValueError):
    code = "rate_fit"
