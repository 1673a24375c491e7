"""Nonuniform L1 approximation of a Caputo derivative of order ``nu`` in (0, 1).

``D v(t_n) ~ sum_{k=1}^n A^{(n)}_{n-k} (v^k - v^{k-1})`` with

``A^{(n)}_{n-k} = [(t_n - t_{k-1})**(1-nu) - (t_n - t_k)**(1-nu)] / (Gamma(2-nu) tau_k)``.

Weights are indexed here so that ``l1_weights(mesh, nu, n)[j]`` is
``A^{(n)}_j``, i.e. ``j = n - k`` counts steps back from ``t_n``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_triangular

from .mesh import TimeMesh

__all__ = [
    "L1Weights",
    "discrete_caputo",
    "l1_weights",
    "omega",
    "p_kernel_matrix",
    "p_kernels",
    "stability_budget",
    "stability_profile",
]


def omega(p: float, t):
    """Kernel ``t**(p-1) / Gamma(p)``."""
    if p < 0:
        raise ValueError("p must be >= 0")
    t = np.asarray(t, dtype=float)
    if p < 1 and np.any(t <= 0):
        raise ValueError("omega_p(t) with p < 1 needs t > 0")
    if p == 0:
        raise ValueError("omega_0 is only meaningful as a limit")
    out = t ** (p - 1.0) / math.gamma(p)
    return float(out) if out.ndim == 0 else out


def _power_difference(b, d, p):
    """``(b + d)**p - b**p`` for ``b >= 0``, ``d > 0`` without cancellation.

    The increment ``d`` is passed separately: on strongly graded meshes
    ``t_n - t_{k-1}`` and ``t_n - t_k`` agree to all digits while their true
    difference ``tau_k`` is still resolved.
    """
    b = np.asarray(b, dtype=float)
    d = np.asarray(d, dtype=float)
    out = np.array(d**p, dtype=float)
    pos = b > 0
    bp = b[pos]
    out[pos] = bp**p * np.expm1(p * np.log1p(d[pos] / bp))
    return out


def l1_weights(mesh: TimeMesh, nu: float, n: int) -> np.ndarray:
    """``[A^{(n)}_0, ..., A^{(n)}_{n-1}]`` for step ``n`` of ``mesh``."""
    if not 0.0 < nu < 1.0:
        raise ValueError(f"nu must lie in (0, 1), got {nu!r}")
    if not 1 <= n <= mesh.N:
        raise ValueError(f"n must satisfy 1 <= n <= {mesh.N}, got {n!r}")
    t = mesh.nodes
    k = np.arange(n, 0, -1)  # j = n - k runs 0..n-1
    tau = mesh.steps[k - 1]
    near = t[n] - t[k]
    p = 1.0 - nu
    return _power_difference(near, tau, p) / (math.gamma(2.0 - nu) * tau)


class L1Weights:
    """All L1 weight rows of a mesh, computed once.

    ``self[n]`` is the array returned by :func:`l1_weights` for step ``n``.
    """

    def __init__(self, mesh: TimeMesh, nu: float):
        self.mesh = mesh
        self.nu = float(nu)
        self._rows = [None] + [l1_weights(mesh, nu, n) for n in range(1, mesh.N + 1)]

    def __getitem__(self, n: int) -> np.ndarray:
        if not 1 <= n <= self.mesh.N:
            raise IndexError(n)
        return self._rows[n]

    def __len__(self):
        return self.mesh.N

    @property
    def leading(self) -> np.ndarray:
        """``A^{(n)}_0`` for ``n = 1..N``."""
        return np.array([self._rows[n][0] for n in range(1, self.mesh.N + 1)])


def discrete_caputo(weights, history):
    """``sum_k A^{(n)}_{n-k} (v^k - v^{k-1})`` for ``history = [v^0, ..., v^n]``.

    ``weights`` is the row for step ``n`` (length ``n``). Extra trailing axes of
    ``history`` are treated componentwise.
    """
    w = np.asarray(weights, dtype=float)
    v = np.asarray(history, dtype=float)
    if v.shape[0] != w.shape[0] + 1:
        raise ValueError(
            f"history must hold n + 1 = {w.shape[0] + 1} values, got {v.shape[0]}"
        )
    dv = np.diff(v, axis=0)[::-1]  # dv[j] = v^{n-j} - v^{n-j-1}
    return np.tensordot(w, dv, axes=(0, 0))


def p_kernels(weights: L1Weights, n: int) -> np.ndarray:
    """Complementary kernels ``[P^{(n)}_0, ..., P^{(n)}_{n-1}]``.

    They satisfy ``sum_{j=k}^n P^{(n)}_{n-j} A^{(j)}_{j-k} = 1`` for ``1 <= k <= n``
    and are built from ``j = n`` downwards.
    """
    P = np.zeros(n)  # P[i] = P^{(n)}_i, i = n - j
    P[0] = 1.0 / weights[n][0]
    for j in range(n - 1, 0, -1):
        # sum_{i=j+1}^n (A^{(i)}_{i-j-1} - A^{(i)}_{i-j}) P^{(n)}_{n-i}
        acc = 0.0
        for i in range(j + 1, n + 1):
            row = weights[i]
            acc += (row[i - j - 1] - row[i - j]) * P[n - i]
        P[n - j] = acc / weights[j][0]
    return P


def p_kernel_matrix(weights: L1Weights) -> np.ndarray:
    """Lower-triangular ``Q`` with ``Q[n-1, j-1] = P^{(n)}_{n-j}``.

    ``Q`` is the inverse of the L1 matrix acting on values ``v^1..v^N`` (with
    ``v^0 = 0``), so it is obtained by one triangular inversion.
    """
    N = len(weights)
    D = np.zeros((N, N))
    for n in range(1, N + 1):
        row = weights[n]  # A_0..A_{n-1}
        # coefficient of v^k in D v(t_n): A_{n-k} - A_{n-k-1}
        coef = row.copy()
        coef[1:] -= row[:-1]
        D[n - 1, :n] = coef[::-1]
    return solve_triangular(D, np.eye(N), lower=True)


def stability_budget(weights: L1Weights, alpha: float) -> float:
    """``max_k sum_{j<=k} P^{(k)}_{k-j} omega_{2-alpha}(t_j)`` over the whole mesh."""
    return float(stability_profile(weights, alpha).max())


def stability_profile(weights: L1Weights, alpha: float) -> np.ndarray:
    """Running values ``y^k = sum_{j<=k} P^{(k)}_{k-j} omega_{2-alpha}(t_j)``, k = 1..N.

    ``y`` is the solution of the L1 problem ``D y(t_k) = omega_{2-alpha}(t_k)``,
    ``y^0 = 0``, which avoids forming the kernels explicitly.
    """
    mesh = weights.mesh
    g = omega(2.0 - alpha, mesh.nodes[1:])
    N = mesh.N
    y = np.zeros(N + 1)
    for n in range(1, N + 1):
        row = weights[n]
        dy = np.diff(y[:n])[::-1]  # y^{n-1-j} - y^{n-2-j}
        hist = row[1:] @ dy if n > 1 else 0.0
        y[n] = y[n - 1] + (g[n - 1] - hist) / row[0]
    return y[1:]
