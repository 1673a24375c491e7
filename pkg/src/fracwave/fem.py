"""P1 finite elements on ``(0, L)`` and the unit square, plus the Dirichlet eigensystem.

Degrees of freedom live on interior nodes only (homogeneous Dirichlet data).
In 2D the ``M x M`` squares are each cut along the diagonal from the lower-left
to the upper-right corner, and interior nodes are numbered row by row
(``x`` fastest).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .linalg import SPDSolver

__all__ = [
    "FemSpace",
    "SpectralBasis",
    "build_space",
    "evaluate",
    "evaluation_matrix",
    "l2_error",
    "l2_project",
    "norms",
    "read_field_csv",
    "spectral_basis",
    "write_field_csv",
]

INTERVAL = "interval"
SQUARE = "square"

# 3-point Gauss-Legendre on [0, 1]
_GAUSS_X = 0.5 + 0.5 * np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
_GAUSS_W = np.array([5.0, 8.0, 5.0]) / 18.0


def _normalize_kind(kind):
    kind = {"1d": INTERVAL, "2d": SQUARE}.get(str(kind).lower(), str(kind).lower())
    if kind not in (INTERVAL, SQUARE):
        raise ValueError(f"unknown domain kind {kind!r}; use 'interval' or 'square'")
    return kind


@dataclass(frozen=True, eq=False)
class FemSpace:
    """Continuous P1 space with zero boundary values.

    Attributes
    ----------
    kind : {"interval", "square"}
    n_cells : int
        Cells per side ``M``; ``h = length / M``.
    length : float
        Side length of the domain.
    nodes : ndarray, shape (N_h, d)
        Interior node coordinates, in degree-of-freedom order.
    mass, stiffness : scipy.sparse.csr_matrix
        Gram matrices of the hat functions and of their gradients.
    """

    kind: str
    n_cells: int
    length: float
    nodes: np.ndarray = field(repr=False)
    mass: sp.csr_matrix = field(repr=False)
    stiffness: sp.csr_matrix = field(repr=False)
    _all_nodes: np.ndarray = field(repr=False)
    _elements: np.ndarray = field(repr=False)
    _dof_of_node: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return 1 if self.kind == INTERVAL else 2

    @property
    def h(self) -> float:
        return self.length / self.n_cells

    @property
    def n_dofs(self) -> int:
        return self.nodes.shape[0]

    @property
    def measure(self) -> float:
        return self.length**self.dim

    @cached_property
    def mass_solver(self) -> SPDSolver:
        return SPDSolver(self.mass)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.n_dofs)

    def check_field(self, field_) -> np.ndarray:
        c = np.asarray(field_, dtype=float)
        if c.shape[-1] != self.n_dofs:
            raise ValueError(
                f"field has {c.shape[-1]} coefficients, space has {self.n_dofs} dofs"
            )
        return c

    def load_vector(self, f) -> np.ndarray:
        """``b_i = int f phi_i`` by 3-point rules (Gauss per interval, edge midpoints per triangle)."""
        n_all = self._all_nodes.shape[0]
        if self.kind == INTERVAL:
            left = self._all_nodes[self._elements[:, 0], 0]
            xq = left[:, None] + self.h * _GAUSS_X[None, :]
            fq = np.broadcast_to(np.asarray(f(xq), dtype=float), xq.shape)
            w = self.h * _GAUSS_W
            b0 = (fq * (1.0 - _GAUSS_X) * w).sum(axis=1)
            b1 = (fq * _GAUSS_X * w).sum(axis=1)
            full = np.bincount(self._elements[:, 0], b0, n_all)
            full += np.bincount(self._elements[:, 1], b1, n_all)
        else:
            p = self._all_nodes[self._elements]  # (ne, 3, 2)
            area = 0.5 * self.h**2
            full = np.zeros(n_all)
            # midpoint of edge (a, b); both endpoint hats equal 1/2 there
            for a, b in ((0, 1), (1, 2), (2, 0)):
                mid = 0.5 * (p[:, a] + p[:, b])
                fm = np.broadcast_to(np.asarray(f(mid[:, 0], mid[:, 1]), dtype=float), mid[:, 0].shape)
                contrib = fm * (area / 3.0) * 0.5
                full += np.bincount(self._elements[:, a], contrib, n_all)
                full += np.bincount(self._elements[:, b], contrib, n_all)
        return full[self._interior_nodes]

    @cached_property
    def _interior_nodes(self) -> np.ndarray:
        return np.flatnonzero(self._dof_of_node >= 0)

    def interpolate(self, f) -> np.ndarray:
        """Nodal interpolant of ``f`` on the interior nodes."""
        if self.kind == INTERVAL:
            return np.asarray(f(self.nodes[:, 0]), dtype=float) * np.ones(self.n_dofs)
        return np.asarray(f(self.nodes[:, 0], self.nodes[:, 1]), dtype=float) * np.ones(self.n_dofs)


def _interval_space(n_cells, length):
    h = length / n_cells
    x = np.linspace(0.0, length, n_cells + 1)
    elements = np.column_stack([np.arange(n_cells), np.arange(1, n_cells + 1)])
    k_loc = np.array([[1.0, -1.0], [-1.0, 1.0]]) / h
    m_loc = np.array([[2.0, 1.0], [1.0, 2.0]]) * h / 6.0
    return x[:, None], elements, np.broadcast_to(k_loc, (n_cells, 2, 2)), np.broadcast_to(m_loc, (n_cells, 2, 2))


def _square_space(n_cells):
    g = np.linspace(0.0, 1.0, n_cells + 1)
    X, Y = np.meshgrid(g, g)  # row j holds y = g[j]
    coords = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((n_cells + 1) ** 2).reshape(n_cells + 1, n_cells + 1)
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[:-1, 1:].ravel()
    v01 = idx[1:, :-1].ravel()
    v11 = idx[1:, 1:].ravel()
    elements = np.concatenate(
        [np.column_stack([v00, v10, v11]), np.column_stack([v00, v11, v01])]
    )
    p = coords[elements]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    area = 0.5 * np.abs(det)
    # gradients of the barycentric coordinates
    g1 = np.column_stack([e2[:, 1], -e2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-e1[:, 1], e1[:, 0]]) / det[:, None]
    grads = np.stack([-(g1 + g2), g1, g2], axis=1)
    k_loc = area[:, None, None] * np.einsum("eid,ejd->eij", grads, grads)
    m_ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    m_loc = area[:, None, None] * m_ref[None]
    return coords, elements, k_loc, m_loc


def build_space(kind="interval", n_cells: int = 200, length: float = math.pi) -> FemSpace:
    """Assemble the P1 space on ``(0, length)`` or on the unit square.

    ``length`` is ignored for the square, which is always ``(0, 1)**2``.
    """
    kind = _normalize_kind(kind)
    if int(n_cells) != n_cells or n_cells < 2:
        raise ValueError(f"n_cells must be an integer >= 2, got {n_cells!r}")
    n_cells = int(n_cells)
    if kind == INTERVAL:
        if not length > 0:
            raise ValueError("length must be positive")
        coords, elements, k_loc, m_loc = _interval_space(n_cells, float(length))
        boundary = (coords[:, 0] == 0.0) | (np.arange(coords.shape[0]) == n_cells)
    else:
        length = 1.0
        coords, elements, k_loc, m_loc = _square_space(n_cells)
        i = np.tile(np.arange(n_cells + 1), n_cells + 1)
        j = np.repeat(np.arange(n_cells + 1), n_cells + 1)
        boundary = (i == 0) | (j == 0) | (i == n_cells) | (j == n_cells)

    n_all = coords.shape[0]
    nloc = elements.shape[1]
    rows = np.repeat(elements, nloc, axis=1).ravel()
    cols = np.tile(elements, (1, nloc)).ravel()
    K = sp.coo_matrix((np.asarray(k_loc).ravel(), (rows, cols)), shape=(n_all, n_all)).tocsr()
    Mm = sp.coo_matrix((np.asarray(m_loc).ravel(), (rows, cols)), shape=(n_all, n_all)).tocsr()

    interior = np.flatnonzero(~boundary)
    dof_of_node = np.full(n_all, -1)
    dof_of_node[interior] = np.arange(interior.size)
    stiffness = K[interior][:, interior].tocsr()
    mass = Mm[interior][:, interior].tocsr()
    # exact symmetry; assembly sums in different orders
    stiffness = ((stiffness + stiffness.T) * 0.5).tocsr()
    mass = ((mass + mass.T) * 0.5).tocsr()

    nodes = coords[interior].copy()
    for arr in (nodes, coords, elements, dof_of_node):
        arr.setflags(write=False)
    return FemSpace(
        kind=kind,
        n_cells=n_cells,
        length=float(length),
        nodes=nodes,
        mass=mass,
        stiffness=stiffness,
        _all_nodes=coords,
        _elements=elements,
        _dof_of_node=dof_of_node,
    )


def l2_project(space: FemSpace, f) -> np.ndarray:
    """Coefficients ``c`` with ``M c = (f, phi_i)``.

    ``f`` takes ``x`` (interval) or ``x, y`` (square) arrays.
    """
    b = space.load_vector(f)
    return space.mass_solver.solve(b)


def _as_points(space, points):
    pts = np.asarray(points, dtype=float)
    if space.dim == 1:
        pts = pts.reshape(-1, 1) if pts.ndim <= 1 else pts
    else:
        pts = np.atleast_2d(pts)
    if pts.shape[1] != space.dim:
        raise ValueError(f"points must have {space.dim} coordinate(s)")
    tol = 1e-12 * space.length
    if np.any(pts < -tol) or np.any(pts > space.length + tol):
        raise ValueError("point outside the closed domain")
    return np.clip(pts, 0.0, space.length)


def evaluation_matrix(space: FemSpace, points) -> sp.csr_matrix:
    """Sparse ``E`` with ``(E c)_i = u_h(x_i)`` for coefficient vectors ``c``."""
    pts = _as_points(space, points)
    M = space.n_cells
    h = space.h
    n = pts.shape[0]
    width = M + 1
    if space.dim == 1:
        s = pts[:, 0] / h
        i = np.minimum(np.floor(s).astype(int), M - 1)
        xi = s - i
        nodes = np.column_stack([i, i + 1])
        weights = np.column_stack([1.0 - xi, xi])
    else:
        s = pts[:, 0] / h
        t = pts[:, 1] / h
        i = np.minimum(np.floor(s).astype(int), M - 1)
        j = np.minimum(np.floor(t).astype(int), M - 1)
        xi = s - i
        eta = t - j
        v00 = i + j * width
        v10 = v00 + 1
        v01 = v00 + width
        v11 = v01 + 1
        lower = xi >= eta
        nodes = np.where(
            lower[:, None],
            np.column_stack([v00, v10, v11]),
            np.column_stack([v00, v11, v01]),
        )
        weights = np.where(
            lower[:, None],
            np.column_stack([1.0 - xi, xi - eta, eta]),
            np.column_stack([1.0 - eta, xi, eta - xi]),
        )
    dofs = space._dof_of_node[nodes]
    keep = dofs >= 0
    rows = np.broadcast_to(np.arange(n)[:, None], dofs.shape)
    E = sp.coo_matrix(
        (weights[keep], (rows[keep], dofs[keep])), shape=(n, space.n_dofs)
    )
    return E.tocsr()


def evaluate(space: FemSpace, field_, points):
    """Value of the P1 function at ``points``; zero on the boundary.

    A single point returns a float, several points an array. For the interval a
    1-D array is read as a list of points.
    """
    c = space.check_field(field_)
    single = np.ndim(points) == 0 or (space.dim == 2 and np.ndim(points) == 1)
    vals = evaluation_matrix(space, points) @ c.T
    if single:
        return float(np.ravel(vals)[0]) if c.ndim == 1 else vals[0]
    return vals


def norms(space: FemSpace, field_):
    """``(||u||_L2, |u|_H1) = (sqrt(c'Mc), sqrt(c'Ac))``."""
    c = space.check_field(field_)
    l2 = math.sqrt(max(float(c @ (space.mass @ c)), 0.0))
    h1 = math.sqrt(max(float(c @ (space.stiffness @ c)), 0.0))
    return l2, h1


# -- Dirichlet eigensystem -------------------------------------------------


@dataclass(frozen=True)
class SpectralBasis:
    """First ``K`` Dirichlet eigenpairs of ``-Laplace``, sorted by eigenvalue.

    1D on ``(0, L)``: ``lambda_k = (k pi / L)**2``, ``phi_k = sqrt(2/L) sin(k pi x / L)``.
    2D on the unit square: ``lambda = pi**2 (j**2 + k**2)``,
    ``phi = 2 sin(j pi x) sin(k pi y)``.
    """

    kind: str
    K: int
    length: float
    eigenvalues: np.ndarray = field(repr=False)
    modes: np.ndarray = field(repr=False)  # (K, d) integer wave numbers

    def __call__(self, *coords) -> np.ndarray:
        """Eigenfunction values, shape ``(K, n_points)``."""
        L = self.length
        if self.kind == INTERVAL:
            x = np.ravel(coords[0])
            return math.sqrt(2.0 / L) * np.sin(np.outer(self.modes[:, 0], x) * math.pi / L)
        x, y = (np.ravel(c) for c in coords)
        return 2.0 * np.sin(np.outer(self.modes[:, 0], x) * math.pi) * np.sin(
            np.outer(self.modes[:, 1], y) * math.pi
        )

    def coefficients(self, f, n_quad: int = 4000) -> np.ndarray:
        """``(f, phi_k)`` by composite 3-point Gauss quadrature (per axis)."""
        L = self.length
        edges = np.linspace(0.0, L, n_quad + 1)
        xq = (edges[:-1, None] + np.diff(edges)[:, None] * _GAUSS_X[None]).ravel()
        wq = (np.diff(edges)[:, None] * _GAUSS_W[None]).ravel()
        if self.kind == INTERVAL:
            return self(xq) @ (wq * f(xq))
        X, Y = np.meshgrid(xq, xq, indexing="ij")
        F = f(X, Y) * np.outer(wq, wq)
        sx = np.sin(np.outer(self.modes[:, 0], xq) * math.pi)
        sy = np.sin(np.outer(self.modes[:, 1], xq) * math.pi)
        return 2.0 * np.einsum("ki,ij,kj->k", sx, F, sy)


def spectral_basis(kind="interval", K: int = 1, length: float = math.pi) -> SpectralBasis:
    kind = _normalize_kind(kind)
    if int(K) != K or K < 1:
        raise ValueError("K must be a positive integer")
    K = int(K)
    if kind == INTERVAL:
        modes = np.arange(1, K + 1)[:, None]
        lam = (modes[:, 0] * math.pi / length) ** 2
    else:
        length = 1.0
        m = int(math.isqrt(K)) + 2
        while True:
            j, k = np.meshgrid(np.arange(1, m + 1), np.arange(1, m + 1), indexing="ij")
            j, k = j.ravel(), k.ravel()
            lam_all = math.pi**2 * (j**2 + k**2)
            order = np.lexsort((k, j, lam_all))[:K]
            # every pair with j**2 + k**2 below (m+1)**2 is present
            if lam_all[order[-1]] < math.pi**2 * (m + 1) ** 2:
                break
            m *= 2
        modes = np.column_stack([j[order], k[order]])
        lam = lam_all[order].astype(float)
    return SpectralBasis(kind=kind, K=K, length=float(length), eigenvalues=lam, modes=modes)


# -- CSV ---------------------------------------------------------------------


def write_field_csv(space: FemSpace, field_, stream=None, header=None) -> str:
    """Rows ``x[,y],value`` over interior nodes, after optional ``#`` metadata lines."""
    c = space.check_field(field_)
    out = io.StringIO()
    for line in header or ():
        out.write(f"# {line}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["x", "value"] if space.dim == 1 else ["x", "y", "value"])
    for p, v in zip(space.nodes, c):
        w.writerow([repr(float(q)) for q in p] + [repr(float(v))])
    text = out.getvalue()
    if stream is not None:
        stream.write(text)
    return text


def read_field_csv(space: FemSpace, stream) -> np.ndarray:
    rows = [r for r in csv.reader(line for line in stream if not line.startswith("#"))]
    body = rows[1:]
    if len(body) != space.n_dofs:
        raise ValueError(f"expected {space.n_dofs} rows, got {len(body)}")
    pts = np.array([[float(q) for q in r[:-1]] for r in body])
    if not np.allclose(pts, space.nodes, atol=1e-12 * space.length):
        raise ValueError("CSV node coordinates do not match the space")
    return np.array([float(r[-1]) for r in body])


def l2_error(space: FemSpace, field_, f) -> float:
    """``||u_h - f||_L2`` by 3-point quadrature per element, without cancellation."""
    c = space.check_field(field_)
    full = np.zeros(space._all_nodes.shape[0])
    full[space._interior_nodes] = c
    if space.kind == INTERVAL:
        left = space._all_nodes[space._elements[:, 0], 0]
        xq = left[:, None] + space.h * _GAUSS_X[None, :]
        uq = full[space._elements[:, 0], None] * (1.0 - _GAUSS_X) + full[space._elements[:, 1], None] * _GAUSS_X
        d = uq - f(xq)
        return math.sqrt(float((d**2 * space.h * _GAUSS_W).sum()))
    p = space._all_nodes[space._elements]
    vals = full[space._elements]
    area = 0.5 * space.h**2
    total = 0.0
    for a, b in ((0, 1), (1, 2), (2, 0)):
        mid = 0.5 * (p[:, a] + p[:, b])
        uh = 0.5 * (vals[:, a] + vals[:, b])
        total += float(((uh - f(mid[:, 0], mid[:, 1])) ** 2).sum()) * area / 3.0
    return math.sqrt(total)
