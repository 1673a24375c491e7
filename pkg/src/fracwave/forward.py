"""Forward solvers for ``D^alpha u - Laplace u = 0``, ``u(0) = 0``, ``u_t(0) = a1``.

The time-fractional wave equation of order ``alpha`` in (1, 2) is split into
two half-order equations (``nu = alpha / 2``)::

    D^nu v - Laplace u = a1 omega_{2-alpha}(t)
    v = D^nu u

and both Caputo derivatives are replaced by the nonuniform L1 formula on a
graded mesh. Eliminating ``V^n`` leaves one SPD solve per step::

    (a0**2 M + A) U^n = b^n - M (H_v + a0 H_u),     V^n = a0 U^n + H_u

where ``a0 = A^{(n)}_0`` and ``H_*`` collect the history terms.

The ``lifted`` scheme solves the same system for ``u - t a1`` with load
``-t A a1`` instead of the singular source term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .fem import FemSpace, SpectralBasis
from .l1 import L1Weights, omega
from .linalg import SPDSolver
from .mesh import TimeMesh, graded_mesh, optimal_grading
from .mlf import mittag_leffler

__all__ = [
    "ModalPropagator",
    "ProblemSpec",
    "Trajectory",
    "apply_S",
    "convergence_table",
    "forward_matrix",
    "solve",
    "solve_lifted",
    "solve_sfor",
    "spectral_reference",
]

SCHEMES = ("sfor", "lifted")


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Discretized forward problem; ``a1`` holds interior coefficients."""

    space: FemSpace
    alpha: float
    T: float = 0.1
    N: int = 128
    r: float | None = None
    scheme: str = "sfor"
    a1: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not 1.0 < self.alpha < 2.0:
            raise ValueError(f"alpha must lie in (1, 2), got {self.alpha!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.a1 is not None:
            self.space.check_field(self.a1)

    @property
    def nu(self) -> float:
        return self.alpha / 2.0

    @property
    def grading(self) -> float:
        return optimal_grading(self.alpha) if self.r is None else float(self.r)

    @cached_property
    def mesh(self) -> TimeMesh:
        return graded_mesh(self.T, self.N, self.grading)

    @cached_property
    def weights(self) -> L1Weights:
        return L1Weights(self.mesh, self.nu)

    def with_(self, **changes) -> "ProblemSpec":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Coefficient histories ``u[n]``, ``v[n]`` at the mesh nodes ``t_n``."""

    mesh: TimeMesh
    u: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)

    @property
    def terminal(self) -> np.ndarray:
        return self.u[-1]

    def __len__(self):
        return self.u.shape[0]


def _march(space: FemSpace, weights: L1Weights, load):
    """L1 time stepping of the reduced system; ``load(n)`` returns ``b^n``.

    Works for ``b^n`` of shape ``(N_h,)`` or ``(N_h, k)``.
    """
    mesh = weights.mesh
    N = mesh.N
    M = space.mass
    A = space.stiffness
    b1 = np.asarray(load(1))
    shape = (N + 1,) + b1.shape
    u = np.zeros(shape)
    v = np.zeros(shape)
    du = np.zeros((N,) + b1.shape)  # du[k-1] = u^k - u^{k-1}
    dv = np.zeros((N,) + b1.shape)
    solvers = {}
    for n in range(1, N + 1):
        row = weights[n]
        a0 = row[0]
        if n > 1:
            tail = row[1:]
            hist_u = np.tensordot(tail, du[n - 2 :: -1], axes=(0, 0))
            hist_v = np.tensordot(tail, dv[n - 2 :: -1], axes=(0, 0))
        else:
            hist_u = 0.0
            hist_v = 0.0
        h_u = hist_u - a0 * u[n - 1]
        h_v = hist_v - a0 * v[n - 1]
        b = (b1 if n == 1 else np.asarray(load(n))) - M @ (h_v + a0 * h_u)
        solver = solvers.get(a0)
        if solver is None:
            # uniform meshes reuse one factorization for every step
            solver = SPDSolver((a0 * a0) * M + A)
            solvers = {a0: solver}
        u[n] = solver.solve(b)
        v[n] = a0 * u[n] + h_u
        du[n - 1] = u[n] - u[n - 1]
        dv[n - 1] = v[n] - v[n - 1]
    return u, v


def _datum(spec: ProblemSpec, a1):
    a1 = spec.a1 if a1 is None else a1
    if a1 is None:
        raise ValueError("no initial velocity a1 given")
    return spec.space.check_field(a1)


def solve_sfor(spec: ProblemSpec, a1=None) -> Trajectory:
    """March the reduced scheme with the source ``a1 omega_{2-alpha}(t_n)``."""
    a1 = _datum(spec, a1)
    mesh = spec.mesh
    Ma1 = spec.space.mass @ a1
    w = omega(2.0 - spec.alpha, mesh.nodes[1:])
    u, v = _march(spec.space, spec.weights, lambda n: w[n - 1] * Ma1)
    return Trajectory(mesh=mesh, u=u, v=v)


def solve_lifted(spec: ProblemSpec, a1=None) -> Trajectory:
    """Solve for ``u - t a1`` with load ``-t A a1``, then add ``t_n a1`` back."""
    a1 = _datum(spec, a1)
    mesh = spec.mesh
    Aa1 = spec.space.stiffness @ a1
    t = mesh.nodes
    w, v = _march(spec.space, spec.weights, lambda n: -t[n] * Aa1)
    u = w + np.multiply.outer(t, a1)
    return Trajectory(mesh=mesh, u=u, v=v)


def solve(spec: ProblemSpec, a1=None) -> Trajectory:
    """Dispatch on ``spec.scheme``."""
    return (solve_sfor if spec.scheme == "sfor" else solve_lifted)(spec, a1)


def apply_S(spec: ProblemSpec, a1) -> np.ndarray:
    """Terminal coefficients ``u^N`` of the discrete solution for datum ``a1``."""
    return solve(spec, a1).terminal


# -- modal route -------------------------------------------------------------


class ModalPropagator:
    """The same discrete scheme in the eigenbasis of the pencil ``(A, M)``.

    With ``A Phi = M Phi diag(lam)`` and ``Phi' M Phi = I`` every step
    decouples into scalar recursions, so the whole solution operator costs one
    dense symmetric eigendecomposition plus ``O(N**2 N_h)`` work. Used for
    design matrices, where one solve per basis function would be wasteful.
    """

    def __init__(self, space: FemSpace):
        self.space = space
        lam, phi = sla.eigh(space.stiffness.toarray(), space.mass.toarray())
        self.eigenvalues = lam
        self.modes = phi

    def histories(self, spec: ProblemSpec) -> np.ndarray:
        """Modal response ``g[n, k]`` to a unit datum in mode ``k``."""
        lam = self.eigenvalues
        mesh = spec.mesh
        weights = spec.weights
        N = mesh.N
        K = lam.size
        u = np.zeros((N + 1, K))
        v = np.zeros((N + 1, K))
        du = np.zeros((N, K))
        dv = np.zeros((N, K))
        if spec.scheme == "sfor":
            src = omega(2.0 - spec.alpha, mesh.nodes[1:])[:, None] * np.ones(K)
        else:
            src = -mesh.nodes[1:, None] * lam[None, :]
        for n in range(1, N + 1):
            row = weights[n]
            a0 = row[0]
            if n > 1:
                hist_u = row[1:] @ du[n - 2 :: -1]
                hist_v = row[1:] @ dv[n - 2 :: -1]
            else:
                hist_u = hist_v = 0.0
            h_u = hist_u - a0 * u[n - 1]
            h_v = hist_v - a0 * v[n - 1]
            u[n] = (src[n - 1] - h_v - a0 * h_u) / (a0 * a0 + lam)
            v[n] = a0 * u[n] + h_u
            du[n - 1] = u[n] - u[n - 1]
            dv[n - 1] = v[n] - v[n - 1]
        if spec.scheme == "lifted":
            u = u + mesh.nodes[:, None]
        return u

    def trajectory(self, spec: ProblemSpec, a1=None) -> np.ndarray:
        """``u[n]`` for all ``n`` (no ``v``); agrees with :func:`solve` to rounding."""
        a1 = _datum(spec, a1)
        g = self.histories(spec)
        coef = self.modes.T @ (self.space.mass @ a1)
        return (g * coef) @ self.modes.T

    def terminal_matrix(self, spec: ProblemSpec) -> np.ndarray:
        """Dense ``S`` with ``S @ a1 = u^N``."""
        g = self.histories(spec)[-1]
        return (self.modes * g) @ (self.modes.T @ self.space.mass.toarray())


def forward_matrix(spec: ProblemSpec, propagator: ModalPropagator | None = None) -> np.ndarray:
    """Dense matrix of ``a1 -> u^N``, columns ordered like the basis functions."""
    propagator = propagator or ModalPropagator(spec.space)
    return propagator.terminal_matrix(spec)


# -- exact solution ----------------------------------------------------------


def spectral_reference(basis: SpectralBasis, coefficients, alpha: float, t: float, *coords):
    """``u(x, t) = sum_k t E_{alpha,2}(-lam_k t**alpha) (a1, phi_k) phi_k(x)``.

    ``coords`` are the point coordinates (``x`` or ``x, y``).
    """
    c = np.asarray(coefficients, dtype=float)
    if c.shape != (basis.K,):
        raise ValueError(f"need {basis.K} modal coefficients")
    if t < 0:
        raise ValueError("t must be non-negative")
    n_pts = np.size(coords[0])
    if t == 0:
        return np.zeros(n_pts)
    damp = t * mittag_leffler(alpha, 2.0, -basis.eigenvalues * t**alpha)
    return (damp * c) @ basis(*coords)


# -- convergence tables ------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceRow:
    N: int
    error: float
    order: float | None


def _max_error(space, coarse: np.ndarray, fine: np.ndarray, stride: int) -> float:
    diff = coarse[1:] - fine[stride::stride]
    sq = np.einsum("ni,ni->n", diff, (space.mass @ diff.T).T)
    return math.sqrt(max(float(sq.max()), 0.0))


def convergence_table(spec: ProblemSpec, Ns, N_ref: int, reference: Trajectory | None = None):
    """Temporal errors ``max_n ||U^n_N - U^n_ref||_L2`` and observed orders.

    The reference uses the same grading, so coarse nodes are exactly
    reference nodes when ``N`` divides ``N_ref``.
    """
    Ns = [int(n) for n in Ns]
    for n in Ns:
        if N_ref % n:
            raise ValueError(f"N = {n} does not divide N_ref = {N_ref}; grids are not nested")
    if reference is None:
        reference = solve(spec.with_(N=N_ref))
    rows = []
    prev = None
    for n in Ns:
        traj = solve(spec.with_(N=n))
        err = _max_error(spec.space, traj.u, reference.u, N_ref // n)
        order = None
        if prev is not None and prev[0] * 2 == n and err > 0:
            order = math.log2(prev[1] / err)
        rows.append(ConvergenceRow(N=n, error=err, order=order))
        prev = (n, err)
    return rows
