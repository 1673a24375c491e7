"""Sparse SPD solves: one factorization reused across right-hand sides."""

from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = ["SPDSolver", "power_iteration"]

logger = logging.getLogger(__name__)


class SPDSolver:
    """Factor a sparse symmetric positive definite matrix once, solve many times.

    The factorization is SuperLU with COLAMD ordering. If it fails the solver
    falls back to conjugate gradients with relative tolerance ``cg_tol`` and
    at most ``10 * n`` iterations.
    """

    def __init__(self, matrix, cg_tol: float = 1e-12):
        self.matrix = sp.csc_matrix(matrix)
        self.cg_tol = cg_tol
        self._lu = None
        n = self.matrix.shape[0]
        if n == 0:
            return
        try:
            self._lu = spla.splu(self.matrix)
        except RuntimeError as exc:  # singular pivot
            logger.warning("sparse factorization failed (%s); using CG", exc)

    @property
    def shape(self):
        return self.matrix.shape

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        if self.matrix.shape[0] == 0:
            return np.zeros_like(rhs)
        if self._lu is not None:
            return self._lu.solve(rhs)
        if rhs.ndim == 1:
            return self._cg(rhs)
        return np.column_stack([self._cg(col) for col in rhs.T])

    def _cg(self, b):
        n = self.matrix.shape[0]
        x, info = spla.cg(self.matrix, b, rtol=self.cg_tol, atol=0.0, maxiter=10 * n)
        if info != 0:
            raise np.linalg.LinAlgError(f"conjugate gradient did not converge (info={info})")
        return x


def power_iteration(matvec, n: int, n_iter: int = 50, seed: int = 0) -> float:
    """Estimate the largest eigenvalue of a symmetric PSD operator.

    Returns the Rayleigh quotient after ``n_iter`` normalized products.
    """
    if n == 0:
        return 0.0
    v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(n_iter):
        w = matvec(v)
        lam = float(v @ w)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
    return lam
