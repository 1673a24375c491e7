"""Recovering the initial velocity ``a1`` from noisy scattered terminal data.

Observations are ``m_i = (S a*)(x_i) + e_i`` with ``S`` the discrete solution
operator ``a1 -> u^N`` and i.i.d. Gaussian noise ``e_i ~ N(0, sigma**2)``.
The reconstruction minimizes

    J(a) = ||G a - m||_n**2 + rho ||a||_R**2,   ||w||_n**2 = sum(w**2) / n,

over the P1 space, where ``G`` is the design matrix (forward operator
evaluated at the points) and ``R`` the regularizer Gram matrix.
"""

from __future__ import annotations

import hashlib
import logging
import math
import os
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg as sla
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .fem import FemSpace, build_space, evaluation_matrix, l2_error, l2_project
from .forward import ModalPropagator, ProblemSpec, apply_S
from .linalg import power_iteration

__all__ = [
    "DesignMatrix",
    "add_noise",
    "FractionalWaveForward",
    "InverseProblem",
    "MonteCarloRow",
    "ObservationSet",
    "ScatteredPoints",
    "TikhonovConfig",
    "TikhonovInitialVelocity",
    "TikhonovResult",
    "assemble_design_matrix",
    "discrete_seminorm",
    "monte_carlo_study",
    "observe",
    "optimal_rho",
    "regularizer_matrix",
    "relative_error",
    "scatter_points",
    "tikhonov",
    "tikhonov_direct",
    "tikhonov_gd",
    "worker_count",
]

logger = logging.getLogger(__name__)

REGULARIZERS = ("h1_semi", "h1_full")
SOLVERS = ("direct", "gd")
NOISE_MODEL = "gaussian"
# ||.||_n is a plain point average; compared with L2 norms divided by sqrt(|Omega|)
SEMINORM_CONVENTION = "rms over points, unweighted by |Omega|"


def worker_count(default: int | None = None) -> int:
    """Thread cap from ``FRACWAVE_THREADS`` (falls back to the CPU count)."""
    raw = os.environ.get("FRACWAVE_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"FRACWAVE_THREADS must be a positive integer, got {raw!r}") from None
        if n < 1:
            raise ValueError(f"FRACWAVE_THREADS must be a positive integer, got {raw!r}")
        return n
    return default or os.cpu_count() or 1


# -- observation model -------------------------------------------------------


class ScatteredPoints(NamedTuple):
    """Observation points with their quasi-uniformity constants.

    ``d_min`` is the smallest pairwise distance, ``d_max`` the fill distance
    of the closed domain (largest distance to the nearest point, evaluated
    on a fine lattice) and ``B = d_max / d_min``.
    """

    points: np.ndarray
    d_max: float
    d_min: float
    B: float


def _fill_distance(points, dim, length, n_lattice):
    axis = np.linspace(0.0, length, n_lattice + 1)
    if dim == 1:
        probe = axis[:, None]
    else:
        gx, gy = np.meshgrid(axis, axis, indexing="xy")
        probe = np.column_stack([gx.ravel(), gy.ravel()])
    dist, _ = cKDTree(points).query(probe)
    return float(dist.max())


def scatter_points(space: FemSpace, n: int) -> ScatteredPoints:
    """Quasi-uniform observation points in the domain of ``space``.

    Interval: ``x_i = i L / (n + 1)``, ``i = 1..n``. Square: the interior
    grid nodes of ``space`` (so ``n`` must be ``(M - 1)**2``), row-major with
    ``x`` fastest.
    """
    n = int(n)
    if n < 1:
        raise ValueError(f"need at least one observation point, got n={n}")
    L = space.length
    if space.dim == 1:
        pts = (np.arange(1, n + 1) * (L / (n + 1)))[:, None]
        lattice = 8 * (n + 1)
    else:
        if n != space.n_dofs:
            raise ValueError(
                f"square domain observes the {space.n_dofs} interior grid nodes, got n={n}"
            )
        pts = np.array(space.nodes, dtype=float)
        lattice = 8 * space.n_cells
    if n > 1:
        d_min = float(cKDTree(pts).query(pts, k=2)[0][:, 1].min())
    else:
        d_min = L
    d_max = _fill_distance(pts, space.dim, L, lattice)
    pts.setflags(write=False)
    return ScatteredPoints(points=pts, d_max=d_max, d_min=d_min, B=d_max / d_min)


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Points ``x_i``, noisy values ``m_i``, noise level and seed."""

    points: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    sigma: float
    seed: int | None
    noise: str = NOISE_MODEL

    def __post_init__(self):
        if self.points.shape[0] != self.values.shape[0]:
            raise ValueError("one value per point is required")

    @property
    def n(self) -> int:
        return self.values.shape[0]


def add_noise(clean, sigma: float, seed) -> np.ndarray:
    """``clean + e`` with ``e ~ N(0, sigma**2)`` i.i.d. from ``default_rng(seed)``."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma!r}")
    clean = np.asarray(clean, dtype=float)
    if sigma == 0:
        return clean.copy()
    rng = np.random.default_rng(seed)
    return clean + sigma * rng.standard_normal(clean.shape)


def observe(spec: ProblemSpec, a_star, points, sigma: float, seed=None) -> ObservationSet:
    """Noisy terminal observations ``m_i = (S a*)(x_i) + e_i``."""
    pts = points.points if isinstance(points, ScatteredPoints) else np.asarray(points, dtype=float)
    terminal = apply_S(spec, a_star)
    clean = evaluation_matrix(spec.space, pts) @ terminal
    values = add_noise(clean, sigma, seed)
    return ObservationSet(points=pts, values=values, sigma=float(sigma), seed=seed)


def discrete_seminorm(values) -> float:
    """``||u||_n = sqrt(sum(u_i**2) / n)``."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("need at least one value")
    return float(np.sqrt(np.mean(v * v)))


# -- design matrix -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """``G[i, j] = (S phi_j)(x_i)`` for the interior hat functions ``phi_j``."""

    matrix: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)
    spec: ProblemSpec = field(repr=False)
    provenance: str = ""

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, other):
        return self.matrix @ other

    def spot_check(self, columns=None, rtol: float = 1e-10) -> float:
        """Compare columns with one direct forward solve each; returns the worst gap.

        Raises ``AssertionError`` if a column differs by more than ``rtol``
        relative to the largest column entry.
        """
        n_h = self.matrix.shape[1]
        if columns is None:
            columns = sorted({0, n_h // 2, n_h - 1}) if n_h else []
        E = evaluation_matrix(self.spec.space, self.points)
        worst = 0.0
        for j in columns:
            e = np.zeros(n_h)
            e[j] = 1.0
            ref = E @ apply_S(self.spec, e)
            scale = max(np.abs(ref).max(), np.abs(self.matrix[:, j]).max(), 1e-300)
            gap = float(np.abs(ref - self.matrix[:, j]).max() / scale)
            worst = max(worst, gap)
            if gap > rtol:
                raise AssertionError(f"design column {j} off by {gap:.2e} (relative)")
        return worst


def _spec_hash(spec: ProblemSpec) -> str:
    s = spec.space
    key = f"{s.kind}|{s.n_cells}|{s.length!r}|{spec.alpha!r}|{spec.T!r}|{spec.N}|{spec.grading!r}|{spec.scheme}"
    return hashlib.sha256(key.encode()).hexdigest()[:16]


def assemble_design_matrix(
    spec: ProblemSpec, points, propagator: ModalPropagator | None = None
) -> DesignMatrix:
    """Dense design matrix through the modal form of the scheme.

    The modal route reproduces one forward solve per basis function to
    rounding (see :meth:`DesignMatrix.spot_check`) at a fraction of the cost.
    """
    pts = points.points if isinstance(points, ScatteredPoints) else np.asarray(points, dtype=float)
    space = spec.space
    if space.n_dofs == 0:
        G = np.zeros((pts.shape[0], 0))
    else:
        propagator = propagator or ModalPropagator(space)
        S = propagator.terminal_matrix(spec)
        G = np.asarray(evaluation_matrix(space, pts) @ S)
    G.setflags(write=False)
    return DesignMatrix(matrix=G, points=pts, spec=spec, provenance=_spec_hash(spec))


# -- Tikhonov ----------------------------------------------------------------


@dataclass(frozen=True)
class TikhonovConfig:
    """Regularization weight, regularizer and solver settings.

    ``tol`` is relative: gradient descent stops once the gradient norm falls
    below ``tol`` times its value at ``a = 0``.
    """

    rho: float
    regularizer: str = "h1_semi"
    solver: str = "direct"
    step: float | None = None
    max_iters: int = 200_000
    tol: float = 1e-10

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho!r}")
        if self.regularizer not in REGULARIZERS:
            raise ValueError(f"regularizer must be one of {REGULARIZERS}, got {self.regularizer!r}")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if self.step is not None and not self.step > 0:
            raise ValueError("step must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True, eq=False)
class TikhonovResult:
    coef: np.ndarray = field(repr=False)
    rho: float
    iterations: int = 0
    converged: bool = True
    gradient_norm: float = 0.0


def regularizer_matrix(space: FemSpace, kind: str = "h1_semi") -> np.ndarray:
    """Dense Gram matrix ``R``: stiffness, or stiffness plus mass."""
    if kind == "h1_semi":
        R = space.stiffness
    elif kind == "h1_full":
        R = space.stiffness + space.mass
    else:
        raise ValueError(f"regularizer must be one of {REGULARIZERS}, got {kind!r}")
    return R.toarray()


def _as_matrix(G):
    return G.matrix if isinstance(G, DesignMatrix) else np.asarray(G, dtype=float)


def _check_system(G, m):
    G = _as_matrix(G)
    m = np.asarray(m, dtype=float)
    if G.ndim != 2 or m.shape[0] != G.shape[0]:
        raise ValueError(f"design matrix {G.shape} and data {m.shape} do not match")
    return G, m


def tikhonov_direct(G, m, config: TikhonovConfig, R: np.ndarray) -> TikhonovResult:
    """Solve ``(G'G / n + rho R) a = G'm / n`` by Cholesky.

    ``m`` may hold several data vectors as columns.
    """
    G, m = _check_system(G, m)
    n = G.shape[0]
    H = G.T @ G / n + config.rho * R
    coef = sla.cho_solve(sla.cho_factor(H), G.T @ m / n)
    return TikhonovResult(coef=coef, rho=config.rho)


def gradient(G, m, a, rho, R):
    """``grad J(a) = (2/n) G'(G a - m) + 2 rho R a``."""
    n = G.shape[0]
    return (2.0 / n) * (G.T @ (G @ a - m)) + 2.0 * rho * (R @ a)


def tikhonov_gd(G, m, config: TikhonovConfig, R: np.ndarray, a0=None) -> TikhonovResult:
    """Fixed-step gradient descent on ``J`` from ``a0`` (default zero).

    The default step is ``1 / L`` with ``L`` a power-iteration estimate of the
    largest eigenvalue of ``(2/n) G'G + 2 rho R``. The iteration runs on the
    normal-equation form, which is algebraically the same update.
    """
    G, m = _check_system(G, m)
    n, n_h = G.shape
    rho = config.rho
    H = (2.0 / n) * (G.T @ G) + 2.0 * rho * R
    rhs = (2.0 / n) * (G.T @ m)
    step = config.step
    if step is None:
        L = power_iteration(lambda v: H @ v, n_h, n_iter=50)
        # the Rayleigh quotient underestimates L; a small margin keeps step < 2/L
        step = 1.0 / (1.01 * L) if L > 0 else 1.0
    a = np.zeros(n_h) if a0 is None else np.array(a0, dtype=float)
    g = H @ a - rhs
    g0 = np.linalg.norm(rhs)
    target = config.tol * g0
    gnorm = float(np.linalg.norm(g))
    it = 0
    while gnorm > target and it < config.max_iters:
        a -= step * g
        g = H @ a - rhs
        gnorm = float(np.linalg.norm(g))
        it += 1
    converged = gnorm <= target
    if not converged:
        logger.warning("gradient descent stopped after %d iterations (|grad| = %.3e)", it, gnorm)
    return TikhonovResult(coef=a, rho=rho, iterations=it, converged=converged, gradient_norm=gnorm)


def tikhonov(G, m, config: TikhonovConfig, R: np.ndarray) -> TikhonovResult:
    """Dispatch on ``config.solver``."""
    solver = tikhonov_direct if config.solver == "direct" else tikhonov_gd
    return solver(G, m, config, R)


def optimal_rho(sigma: float, n: int, beta: float, d: int, a_norm: float) -> float:
    """A-priori rule ``rho = (sigma n**-0.5 / ||a*||)**(1 / (1/2 + (d/8)/(1 + beta)))``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if n < 1:
        raise ValueError("n must be >= 1")
    if d not in (1, 2, 3):
        raise ValueError("d must be 1, 2 or 3")
    # closed at d/4: the square-domain setting uses beta = 1/2 with d = 2
    if not d / 4 <= beta <= 1:
        raise ValueError(f"beta must lie in [{d / 4}, 1], got {beta!r}")
    if not a_norm > 0:
        raise ValueError("a_norm must be positive")
    exponent = 1.0 / (0.5 + (d / 8.0) / (1.0 + beta))
    return (sigma / math.sqrt(n) / a_norm) ** exponent


def relative_error(space: FemSpace, coef, reference) -> float:
    """``||a_h - a||_L2 / ||a||_L2``; ``reference`` is a callable or a field."""
    if callable(reference):
        return l2_error(space, coef, reference) / l2_error(space, space.zeros(), reference)
    d = np.asarray(coef, dtype=float) - np.asarray(reference, dtype=float)
    ref = np.asarray(reference, dtype=float)
    return math.sqrt(d @ (space.mass @ d)) / math.sqrt(ref @ (space.mass @ ref))


# -- problem bundle and Monte Carlo -----------------------------------------


class InverseProblem:
    """Reconstruction setup: inversion grid, data grid and the true datum.

    ``spec`` is the discretization used for the design matrix, ``data_spec``
    the (usually finer) one that synthesizes observations. Passing
    ``data_spec=None`` uses the same grid for both, which is only meant for
    debugging since it commits the inverse crime.
    """

    def __init__(
        self,
        spec: ProblemSpec,
        a_star: Callable,
        data_spec: ProblemSpec | None = None,
        beta: float = 0.5,
        regularizer: str = "h1_semi",
        name: str = "",
    ):
        self.spec = spec
        self.data_spec = data_spec or spec
        self.a_star = a_star
        self.beta = beta
        self.regularizer = regularizer
        self.name = name
        self._propagator = None
        self._terminal = None

    @property
    def space(self) -> FemSpace:
        return self.spec.space

    @property
    def same_grid(self) -> bool:
        return self.data_spec is self.spec

    @property
    def propagator(self) -> ModalPropagator:
        if self._propagator is None:
            self._propagator = ModalPropagator(self.space)
        return self._propagator

    def a_star_field(self, space: FemSpace | None = None) -> np.ndarray:
        return l2_project(space or self.space, self.a_star)

    def a_star_h1(self) -> float:
        """``|a*|_H1`` of the projection on the inversion grid."""
        c = self.a_star_field()
        return math.sqrt(float(c @ (self.space.stiffness @ c)))

    def points(self, n: int) -> ScatteredPoints:
        return scatter_points(self.space, n)

    def terminal(self) -> np.ndarray:
        """Noiseless terminal coefficients on the data grid (cached)."""
        if self._terminal is None:
            ds = self.data_spec
            self._terminal = apply_S(ds, self.a_star_field(ds.space))
        return self._terminal

    def clean_values(self, points) -> np.ndarray:
        pts = points.points if isinstance(points, ScatteredPoints) else points
        return evaluation_matrix(self.data_spec.space, pts) @ self.terminal()

    def observe(self, points, sigma: float, seed=None) -> ObservationSet:
        pts = points.points if isinstance(points, ScatteredPoints) else np.asarray(points, dtype=float)
        values = add_noise(self.clean_values(pts), sigma, seed)
        return ObservationSet(points=pts, values=values, sigma=float(sigma), seed=seed)

    def design(self, points) -> DesignMatrix:
        return assemble_design_matrix(self.spec, points, self.propagator)

    def regularizer_matrix(self) -> np.ndarray:
        return regularizer_matrix(self.space, self.regularizer)

    def optimal_rho(self, sigma: float, n: int) -> float:
        return optimal_rho(sigma, n, self.beta, self.space.dim, self.a_star_h1())

    def error(self, coef) -> float:
        """Relative L2 error against the exact datum."""
        return relative_error(self.space, coef, self.a_star)


@dataclass(frozen=True)
class MonteCarloRow:
    n: int
    rho: float
    mean: float
    std: float
    errors: tuple = field(repr=False, default=())


def _rule(rho_rule, problem, sigma, n):
    if rho_rule == "optimal":
        return problem.optimal_rho(sigma, n)
    if callable(rho_rule):
        return float(rho_rule(sigma, n))
    return float(rho_rule)


def monte_carlo_study(
    problem: InverseProblem,
    ns,
    sigma: float,
    seeds: int = 20,
    rho_rule="optimal",
    base_seed: int = 0,
    solver: str = "direct",
    max_workers: int | None = None,
) -> list[MonteCarloRow]:
    """Seed-averaged relative errors for each point count in ``ns``.

    ``rho_rule`` is ``"optimal"``, a fixed number, or ``f(sigma, n)``. Trial
    ``k`` draws its noise from ``default_rng(base_seed + k)``; results are
    collected in trial order so the reduction is reproducible.
    """
    if seeds < 1:
        raise ValueError("seeds must be >= 1")
    R = problem.regularizer_matrix()
    workers = max_workers or worker_count()
    rows = []
    for n in ns:
        pts = problem.points(n)
        G = problem.design(pts)
        clean = problem.clean_values(pts)
        rho = _rule(rho_rule, problem, sigma, n)
        config = TikhonovConfig(rho=rho, regularizer=problem.regularizer, solver=solver)

        def trial(k, G=G, clean=clean, config=config):
            m = add_noise(clean, sigma, base_seed + k)
            return problem.error(tikhonov(G, m, config, R).coef)

        if workers > 1 and seeds > 1:
            with ThreadPoolExecutor(max_workers=min(workers, seeds)) as pool:
                errors = list(pool.map(trial, range(seeds)))
        else:
            errors = [trial(k) for k in range(seeds)]
        # statistics rounds correctly, so identical trials give std exactly 0
        rows.append(
            MonteCarloRow(
                n=int(n), rho=rho, mean=statistics.fmean(errors),
                std=statistics.stdev(errors) if seeds > 1 else 0.0, errors=tuple(errors),
            )
        )
    return rows


# -- estimator interface -----------------------------------------------------


class _DiscretizationParams:
    """Shared constructor parameters describing the forward discretization."""

    def _build_spec(self):
        space = build_space(self.kind, self.n_cells, self.length)
        return ProblemSpec(
            space=space, alpha=self.alpha, T=self.T, N=self.N, r=self.r, scheme=self.scheme
        )


class FractionalWaveForward(_DiscretizationParams, TransformerMixin, BaseEstimator):
    """Discrete solution operator as a transformer: rows of ``X`` are data ``a1``.

    ``transform`` maps each row (interior coefficients) to the terminal
    coefficients ``u^N``.

    Examples
    --------
    >>> fw = FractionalWaveForward(alpha=1.5, n_cells=20, N=64).fit()
    >>> fw.transform(np.zeros((2, 19))).shape
    (2, 19)
    """

    def __init__(self, alpha=1.5, T=0.1, N=128, r=None, scheme="sfor",
                 kind="interval", n_cells=200, length=math.pi):
        self.alpha = alpha
        self.T = T
        self.N = N
        self.r = r
        self.scheme = scheme
        self.kind = kind
        self.n_cells = n_cells
        self.length = length

    def fit(self, X=None, y=None):
        spec = self._build_spec()
        self.spec_ = spec
        self.operator_ = ModalPropagator(spec.space).terminal_matrix(spec)
        self.n_features_in_ = spec.space.n_dofs
        return self

    def transform(self, X):
        check_is_fitted(self, "operator_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} columns, expected {self.n_features_in_}")
        return X @ self.operator_.T


class TikhonovInitialVelocity(_DiscretizationParams, RegressorMixin, BaseEstimator):
    """Tikhonov reconstruction of ``a1`` from terminal values at scattered points.

    ``fit(X, y)`` takes observation points ``X`` (shape ``(n, d)``) and noisy
    terminal values ``y``; ``coef_`` holds the reconstructed interior
    coefficients. ``predict`` evaluates the fitted forward prediction
    ``S a_rec`` at new points and ``reconstruct`` the datum itself.

    ``rho="auto"`` selects the a-priori rule, which needs ``sigma`` and
    ``a_norm``.
    """

    def __init__(self, alpha=1.5, T=0.1, N=128, r=None, scheme="sfor",
                 kind="interval", n_cells=20, length=math.pi, rho=1e-4,
                 regularizer="h1_semi", solver="direct", max_iters=200_000, tol=1e-10,
                 sigma=None, a_norm=None, beta=0.5):
        self.alpha = alpha
        self.T = T
        self.N = N
        self.r = r
        self.scheme = scheme
        self.kind = kind
        self.n_cells = n_cells
        self.length = length
        self.rho = rho
        self.regularizer = regularizer
        self.solver = solver
        self.max_iters = max_iters
        self.tol = tol
        self.sigma = sigma
        self.a_norm = a_norm
        self.beta = beta

    def _resolve_rho(self, n, d):
        if self.rho == "auto":
            if self.sigma is None or self.a_norm is None:
                raise ValueError("rho='auto' needs sigma and a_norm")
            return optimal_rho(self.sigma, n, self.beta, d, self.a_norm)
        return float(self.rho)

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        spec = self._build_spec()
        if X.shape[1] != spec.space.dim:
            raise ValueError(f"points must have {spec.space.dim} coordinate(s)")
        rho = self._resolve_rho(X.shape[0], spec.space.dim)
        config = TikhonovConfig(rho=rho, regularizer=self.regularizer, solver=self.solver,
                                max_iters=self.max_iters, tol=self.tol)
        self.propagator_ = ModalPropagator(spec.space)
        G = assemble_design_matrix(spec, X, self.propagator_)
        R = regularizer_matrix(spec.space, self.regularizer)
        res = tikhonov(G, y, config, R)
        self.spec_ = spec
        self.space_ = spec.space
        self.rho_ = rho
        self.coef_ = res.coef
        self.n_iter_ = res.iterations
        self.converged_ = res.converged
        self.terminal_ = self.propagator_.terminal_matrix(spec) @ res.coef
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return evaluation_matrix(self.space_, X) @ self.terminal_

    def reconstruct(self, X):
        """Reconstructed ``a1`` at points ``X``."""
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return evaluation_matrix(self.space_, X) @ self.coef_
