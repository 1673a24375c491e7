"""Graded temporal meshes ``t_n = T (n/N)**r``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["TimeMesh", "graded_mesh", "optimal_grading"]


@dataclass(frozen=True)
class TimeMesh:
    """Nodes ``t_0 = 0 < t_1 < ... < t_N = T`` and steps ``tau_n = t_n - t_{n-1}``.

    ``steps[0]`` is ``tau_1``, so ``steps[n - 1]`` is the step ending at node ``n``.
    """

    T: float
    N: int
    r: float
    nodes: np.ndarray = field(repr=False)
    steps: np.ndarray = field(repr=False)

    def __len__(self):
        return self.N + 1

    def is_refinement_of(self, coarse: "TimeMesh") -> bool:
        """True when every node of ``coarse`` is a node of ``self``."""
        return (
            self.T == coarse.T
            and self.r == coarse.r
            and self.N % coarse.N == 0
        )


def graded_mesh(T: float, N: int, r: float = 1.0) -> TimeMesh:
    """Build the graded mesh ``t_n = T (n/N)**r``."""
    if not T > 0:
        raise ValueError(f"T must be positive, got {T!r}")
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N!r}")
    if not r >= 1:
        raise ValueError(f"grading exponent r must be >= 1, got {r!r}")
    N = int(N)
    nodes = T * (np.arange(N + 1) / N) ** r
    nodes[-1] = T
    nodes.setflags(write=False)
    steps = np.diff(nodes)
    steps.setflags(write=False)
    return TimeMesh(T=float(T), N=N, r=float(r), nodes=nodes, steps=steps)


def optimal_grading(alpha: float) -> float:
    """Grading exponent ``(4 - alpha) / (2 - alpha)`` balancing the initial layer."""
    if not 1.0 < alpha < 2.0:
        raise ValueError(f"alpha must lie in (1, 2), got {alpha!r}")
    return (4.0 - alpha) / (2.0 - alpha)
