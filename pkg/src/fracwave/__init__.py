"""Time-fractional wave equations: L1 time stepping on graded meshes with P1
finite elements, and Tikhonov recovery of the initial velocity."""

from .fem import FemSpace, build_space, evaluate, l2_project, norms, spectral_basis
from .forward import ModalPropagator, ProblemSpec, Trajectory, apply_S, solve
from .inverse import (
    FractionalWaveForward,
    InverseProblem,
    TikhonovConfig,
    TikhonovInitialVelocity,
    optimal_rho,
    scatter_points,
)
from .l1 import L1Weights, l1_weights
from .mesh import TimeMesh, graded_mesh, optimal_grading
from .mlf import mittag_leffler

__version__ = "0.1.0"

__all__ = [
    "FemSpace",
    "FractionalWaveForward",
    "InverseProblem",
    "L1Weights",
    "ModalPropagator",
    "ProblemSpec",
    "TikhonovConfig",
    "TikhonovInitialVelocity",
    "TimeMesh",
    "Trajectory",
    "apply_S",
    "build_space",
    "evaluate",
    "graded_mesh",
    "l1_weights",
    "l2_project",
    "mittag_leffler",
    "norms",
    "optimal_grading",
    "optimal_rho",
    "scatter_points",
    "solve",
    "spectral_basis",
]
