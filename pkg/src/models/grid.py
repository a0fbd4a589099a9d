"""Uniform time grid on [0, T] shared by every solver and the simulator."""

from dataclasses import dataclass, field

import numpy as np

from src.utils.errors import GridError, GridMismatchError


@dataclass(frozen=True)
class TimeGrid:
    """Nodes t_j = j T / M, j = 0..M."""

    T: float
    M: int
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nodes = np.linspace(0.0, self.T, self.M + 1)
        nodes.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)

    @property
    def h(self) -> float:
        return self.T / self.M

    @property
    def midpoints(self) -> np.ndarray:
        """t_j + h/2, j = 0..M-1."""
        return self.nodes[:-1] + 0.5 * self.h

    @property
    def size(self) -> int:
        return self.M + 1

    def trapezoid_weights(self) -> np.ndarray:
        """Weights w with sum_j w_j f(t_j) the trapezoid rule on this grid."""
        w = np.full(self.M + 1, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w

    def require_same(self, other: "TimeGrid", what: str = "grid") -> None:
        if self != other:
            raise GridMismatchError(
                f"{what} mismatch: (T={self.T}, M={self.M}) vs (T={other.T}, M={other.M})"
            )


def build_time_grid(T: float, M: int) -> TimeGrid:
    """Uniform grid over [0, T] with M steps. Requires T > 0 and M >= 2."""
    if not T > 0:
        raise GridError(f"T must be > 0, got {T}")
    if int(M) != M or M < 2:
        raise GridError(f"M must be an integer >= 2, got {M}")
    return TimeGrid(T=float(T), M=int(M))
