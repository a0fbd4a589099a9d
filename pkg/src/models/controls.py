"""Perturbations of the equilibrium control used by deviation scenarios."""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class FeedbackPerturbation:
    """
    Control law u = (1 + scale) * u_eq + w(t).

    w(t) equals `level + slope * t` on the half-open window [t_a, t_b) (the
    whole horizon when no window is given) and 0 elsewhere.
    """

    scale: float = 0.0
    level: float = 0.0
    slope: float = 0.0
    window: Optional[Tuple[float, float]] = None

    @property
    def is_null(self) -> bool:
        return self.scale == 0.0 and self.level == 0.0 and self.slope == 0.0

    def offset(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        w = float(self.level) + float(self.slope) * t
        if self.window is not None:
            t_a, t_b = self.window
            w = np.where((t >= t_a) & (t < t_b), w, 0.0)
        return w

    def apply(self, u_eq: np.ndarray, t) -> np.ndarray:
        return (1.0 + self.scale) * u_eq + self.offset(t)


EQUILIBRIUM = FeedbackPerturbation()
