"""Named test problems: domains, data, default discretizations and reference tables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fem import FemSpace, build_space, l2_project
from .forward import ProblemSpec
from .inverse import InverseProblem
from .mesh import optimal_grading

__all__ = ["Example", "PaperColumn", "PaperTable", "builtin_examples", "get_example", "paper_tables"]


def sine(x):
    return np.sin(x)


def hat(x):
    """Tent with peak ``pi/2`` at ``x = pi/2`` on ``(0, pi)``."""
    return np.where(x <= 0.5 * math.pi, x, math.pi - x)


def log_sine(x, y):
    """``ln(1 + 10 x) (x - 1) sin(pi y)**(3/4)`` on the unit square."""
    return np.log1p(10.0 * x) * (x - 1.0) * np.abs(np.sin(math.pi * y)) ** 0.75


@dataclass(frozen=True)
class Example:
    """A problem with its default discretization.

    ``data_n_cells`` / ``data_N`` give the finer grid used to synthesize
    observations for inversion (``None`` means the inversion grid).
    """

    name: str
    kind: str
    length: float
    datum: Callable = field(repr=False)
    alpha: float
    n_cells: int
    N: int
    T: float = 0.1
    N_ref: int | None = None
    Ns: tuple = ()
    sigma: float | None = None
    n_obs: int | None = None
    data_n_cells: int | None = None
    data_N: int | None = None
    beta: float = 0.5
    description: str = ""

    def space(self, n_cells: int | None = None) -> FemSpace:
        return build_space(self.kind, n_cells or self.n_cells, self.length)

    def spec(self, alpha=None, N=None, r=None, scheme="sfor", T=None, n_cells=None,
             with_datum=False) -> ProblemSpec:
        space = self.space(n_cells)
        a1 = l2_project(space, self.datum) if with_datum else None
        return ProblemSpec(
            space=space,
            alpha=self.alpha if alpha is None else alpha,
            T=self.T if T is None else T,
            N=N or self.N,
            r=r,
            scheme=scheme,
            a1=a1,
        )

    def inverse_problem(self, alpha=None, N=None, r=None, n_cells=None,
                        same_grid=False, regularizer="h1_semi") -> InverseProblem:
        spec = self.spec(alpha=alpha, N=N, r=r, n_cells=n_cells)
        data_spec = None
        if not same_grid and (self.data_n_cells or self.data_N):
            data_spec = self.spec(
                alpha=alpha, r=r,
                N=self.data_N or spec.N,
                n_cells=self.data_n_cells or spec.space.n_cells,
            )
        return InverseProblem(spec, self.datum, data_spec, beta=self.beta,
                              regularizer=regularizer, name=self.name)


def builtin_examples() -> dict[str, Example]:
    """The catalog, keyed by name."""
    pi = math.pi
    ex = [
        Example("ex1a", "interval", pi, sine, alpha=1.5, n_cells=200, N=128, N_ref=2048,
                Ns=(16, 32, 64, 128), description="smooth datum sin(x)"),
        Example("ex1b", "interval", pi, hat, alpha=1.5, n_cells=200, N=128, N_ref=2048,
                Ns=(16, 32, 64, 128), description="tent datum with a kink at pi/2"),
        Example("ex2a", "interval", pi, sine, alpha=1.5, n_cells=20, N=2048, sigma=0.05,
                n_obs=11, data_n_cells=200, data_N=2048, description="recover sin(x)"),
        Example("ex2b", "interval", pi, hat, alpha=1.5, n_cells=20, N=2048, sigma=0.015,
                n_obs=199, data_n_cells=200, data_N=2048, description="recover the tent"),
        Example("ex3", "square", 1.0, log_sine, alpha=1.25, n_cells=30, N=160, N_ref=1280,
                Ns=(20, 40, 80, 160), description="2D forward, weakly singular datum"),
        Example("ex4", "square", 1.0, log_sine, alpha=1.25, n_cells=30, N=160, sigma=0.01,
                n_obs=841, data_n_cells=60, description="2D reconstruction from grid nodes"),
    ]
    return {e.name: e for e in ex}


def get_example(name: str) -> Example:
    catalog = builtin_examples()
    try:
        return catalog[name]
    except KeyError:
        raise KeyError(f"unknown example {name!r}; choose from {sorted(catalog)}") from None


# -- published convergence tables -------------------------------------------


@dataclass(frozen=True)
class PaperColumn:
    """One (alpha, r, scheme) column with its published errors and orders."""

    label: str
    alpha: float
    r: float
    scheme: str
    errors: tuple
    orders: tuple


@dataclass(frozen=True)
class PaperTable:
    name: str
    example: str
    Ns: tuple
    N_ref: int
    columns: tuple


def _three(alpha):
    return (("r=1", 1.0), ("r_opt", optimal_grading(alpha)), ("r=(4-a)/a", (4.0 - alpha) / alpha))


_PUBLISHED = {
    # name: (example, alpha or per-column spec, errors per column, orders per column)
    "ex1a-1.25": ("ex1a", 1.25, [
        (9.7511e-03, 5.8969e-03, 3.4701e-03, 1.9768e-03),
        (3.2933e-03, 1.3099e-03, 5.0947e-04, 1.9505e-04),
        (3.5919e-03, 1.5200e-03, 6.2187e-04, 2.4760e-04)],
        [(0.726, 0.765, 0.812), (1.330, 1.362, 1.385), (1.241, 1.289, 1.329)]),
    "ex1a-1.5": ("ex1a", 1.5, [
        (2.4091e-02, 1.6884e-02, 1.1451e-02, 7.4624e-03),
        (8.1512e-03, 3.5616e-03, 1.5057e-03, 6.2368e-04),
        (1.4993e-02, 8.8464e-03, 5.0422e-03, 2.7729e-03)],
        [(0.513, 0.560, 0.618), (1.195, 1.242, 1.272), (0.761, 0.811, 0.863)]),
    "ex1a-1.75": ("ex1a", 1.75, [
        (4.2309e-02, 3.3563e-02, 2.5699e-02, 1.8823e-02),
        (2.3254e-02, 1.1796e-02, 5.7768e-03, 2.7613e-03),
        (4.1819e-02, 3.2089e-02, 2.3768e-02, 1.6855e-02)],
        [(0.334, 0.385, 0.449), (0.979, 1.030, 1.065), (0.382, 0.433, 0.496)]),
    "ex1b-1.25": ("ex1b", 1.25, [
        (1.2467e-02, 7.5376e-03, 4.4349e-03, 2.5261e-03),
        (4.2304e-03, 1.6830e-03, 6.5472e-04, 2.5069e-04),
        (4.6017e-03, 1.9470e-03, 7.9643e-04, 3.1707e-04)],
        [(0.726, 0.765, 0.812), (1.330, 1.362, 1.385), (1.241, 1.290, 1.328)]),
    "ex1b-1.5": ("ex1b", 1.5, [
        (3.0851e-02, 2.1619e-02, 1.4660e-02, 9.5536e-03),
        (1.0472e-02, 4.5766e-03, 1.9351e-03, 8.0164e-04),
        (1.9206e-02, 1.1330e-02, 6.4568e-03, 3.5505e-03)],
        [(0.513, 0.560, 0.618), (1.194, 1.242, 1.271), (0.761, 0.811, 0.863)]),
    "ex1b-1.75": ("ex1b", 1.75, [
        (5.4227e-02, 4.3015e-02, 3.2936e-02, 2.4123e-02),
        (2.9853e-02, 1.5145e-02, 7.4165e-03, 3.5449e-03),
        (5.3599e-02, 4.1127e-02, 3.0461e-02, 2.1601e-02)],
        [(0.334, 0.385, 0.449), (0.979, 1.030, 1.065), (0.382, 0.433, 0.496)]),
    "ex3-1.25": ("ex3", 1.25, [
        (2.2836e-03, 1.3385e-03, 7.6092e-04, 4.1144e-04),
        (1.0643e-03, 4.2493e-04, 1.6494e-04, 6.1987e-05),
        (9.0033e-04, 3.6861e-04, 1.4657e-04, 5.6218e-05)],
        [(0.771, 0.815, 0.887), (1.325, 1.365, 1.412), (1.288, 1.331, 1.383)]),
    "ex3-1.75": ("ex3", 1.75, [
        (1.4366e-02, 1.1009e-02, 8.0645e-03, 5.5304e-03),
        (8.7758e-03, 4.3576e-03, 2.0575e-03, 9.4409e-04),
        (1.4216e-02, 1.0541e-02, 7.4764e-03, 4.9702e-03)],
        [(0.384, 0.449, 0.544), (1.010, 1.083, 1.124), (0.431, 0.496, 0.589)]),
}

_IRREGULAR = {
    "ex1a-lifted": ("ex1a", [
        ("a=1.01 r=2", 1.01, 2.0, "lifted",
         (1.2195e-04, 4.5553e-05, 1.6669e-05, 5.9895e-06), (1.421, 1.450, 1.477)),
        ("a=1.01 r=(4-a)/a", 1.01, (4.0 - 1.01) / 1.01, "lifted",
         (1.8560e-04, 7.0649e-05, 2.6175e-05, 9.4821e-06), (1.394, 1.433, 1.465)),
        ("a=1.99 r=2", 1.99, 2.0, "lifted",
         (5.5727e-05, 2.6807e-05, 1.2964e-05, 6.2090e-06), (1.056, 1.048, 1.062)),
    ]),
    "ex1b-1.99": ("ex1b", [
        ("r=1", 1.99, 1.0, "sfor",
         (7.0532e-03, 6.1265e-03, 5.1452e-03, 4.1324e-03), (0.203, 0.252, 0.316)),
        ("r=5", 1.99, 5.0, "sfor",
         (3.0649e-02, 2.6342e-02, 2.1830e-02, 1.7280e-02), (0.218, 0.271, 0.337)),
        ("r=10", 1.99, 10.0, "sfor",
         (5.3655e-02, 4.6214e-02, 3.8240e-02, 3.0184e-02), (0.215, 0.273, 0.341)),
    ]),
}


def paper_tables() -> dict[str, PaperTable]:
    """Published convergence tables keyed as ``<example>-<alpha>`` (plus ``ex1a-lifted``)."""
    out = {}
    catalog = builtin_examples()
    for name, (exname, alpha, errs, orders) in _PUBLISHED.items():
        cols = tuple(
            PaperColumn(label, alpha, r, "sfor", tuple(e), tuple(o))
            for (label, r), e, o in zip(_three(alpha), errs, orders)
        )
        ex = catalog[exname]
        out[name] = PaperTable(name, exname, ex.Ns, ex.N_ref, cols)
    for name, (exname, cols) in _IRREGULAR.items():
        ex = catalog[exname]
        out[name] = PaperTable(
            name, exname, ex.Ns, ex.N_ref,
            tuple(PaperColumn(lb, a, r, s, tuple(e), tuple(o)) for lb, a, r, s, e, o in cols),
        )
    return dict(sorted(out.items()))
