import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracwave.fem import (
    build_space,
    evaluate,
    evaluation_matrix,
    l2_error,
    l2_project,
    norms,
    read_field_csv,
    spectral_basis,
    write_field_csv,
)
from fracwave.mesh import graded_mesh, optimal_grading


# -- time mesh -------------------------------------------------------------


def test_graded_nodes():
    m = graded_mesh(0.1, 4, 2)
    np.testing.assert_allclose(m.nodes, [0, 0.00625, 0.025, 0.05625, 0.1], rtol=1e-15)
    np.testing.assert_allclose(graded_mesh(1.0, 10, 1).nodes, np.arange(11) / 10, atol=1e-15)
    assert graded_mesh(0.1, 16, 5).nodes[1] == pytest.approx(0.1 * 16.0**-5, rel=1e-14)


def test_mesh_is_read_only_and_validated():
    m = graded_mesh(1.0, 8, 3)
    with pytest.raises(ValueError):
        m.nodes[1] = 0.5
    for args in [(0.0, 4, 1), (1.0, 0, 1), (1.0, 2.5, 1), (1.0, 4, 0.5)]:
        with pytest.raises(ValueError):
            graded_mesh(*args)


def test_refinement_relation():
    assert graded_mesh(0.1, 64, 5).is_refinement_of(graded_mesh(0.1, 16, 5))
    assert not graded_mesh(0.1, 64, 5).is_refinement_of(graded_mesh(0.1, 16, 4))
    assert not graded_mesh(0.1, 48, 5).is_refinement_of(graded_mesh(0.1, 32, 5))


def test_optimal_grading():
    assert optimal_grading(1.5) == 5.0
    assert optimal_grading(1.25) == pytest.approx(11 / 3)
    assert optimal_grading(1.75) == pytest.approx(9.0)
    for bad in (1.0, 2.0, 0.5):
        with pytest.raises(ValueError):
            optimal_grading(bad)


@settings(max_examples=60, deadline=None)
@given(N=st.integers(2, 400), r=st.floats(1.0, 10.0), T=st.floats(0.01, 5.0))
def test_mesh_invariants_and_step_bound(N, r, T):
    m = graded_mesh(T, N, r)
    t = m.nodes
    assert t[0] == 0.0 and t[-1] == T
    assert np.all(m.steps > 0)
    n = np.arange(N + 1)
    np.testing.assert_allclose(t, T * (n / N) ** r, rtol=1e-13, atol=0)
    tau = m.steps[1:]
    bound = 2.0**r * r / N * T ** (1.0 / r) * t[2:] ** (1.0 - 1.0 / r)
    assert np.all(tau <= bound * (1 + 1e-12))


# -- FEM -------------------------------------------------------------------


def test_interval_matrices():
    s = build_space("interval", 4)
    h = math.pi / 4
    assert s.n_dofs == 3
    A = s.stiffness.toarray() * h
    Mm = s.mass.toarray() / h
    np.testing.assert_allclose(A, [[2, -1, 0], [-1, 2, -1], [0, -1, 2]], atol=1e-14)
    np.testing.assert_allclose(Mm, [[2 / 3, 1 / 6, 0], [1 / 6, 2 / 3, 1 / 6], [0, 1 / 6, 2 / 3]], atol=1e-14)


def test_square_matrices():
    s = build_space("square", 2)
    assert s.n_dofs == 1
    assert s.stiffness.toarray()[0, 0] == pytest.approx(4.0)
    s3 = build_space("square", 30)
    assert s3.n_dofs == 29**2
    for mat in (s3.mass, s3.stiffness):
        assert abs(mat - mat.T).max() < 1e-14
    assert np.linalg.eigvalsh(s3.stiffness.toarray()).min() > 0


def test_mass_row_sums_recover_measure_in_1d():
    s = build_space("interval", 10)
    # each boundary hat adds its row (h/2) and its column entry h/6 to the full sum
    total = s.mass.sum() + 2 * (s.h / 2) + 2 * (s.h / 6)
    assert total == pytest.approx(s.measure, rel=1e-13)


def test_projection_examples():
    s = build_space("interval", 20)
    assert np.all(l2_project(s, lambda x: 0 * x) == 0)
    # a hat function of the space is reproduced exactly
    j = 7
    xj = s.nodes[j, 0]
    hat = lambda x: np.maximum(0.0, 1.0 - np.abs(x - xj) / s.h)
    c = l2_project(s, hat)
    e = np.zeros(s.n_dofs)
    e[j] = 1.0
    np.testing.assert_allclose(c, e, atol=1e-12)
    fine = build_space("interval", 200)
    c = l2_project(fine, np.sin)
    assert np.abs(c - np.sin(fine.nodes[:, 0])).max() < fine.h**2


def test_norms_of_sine():
    s = build_space("interval", 400)
    l2, h1 = norms(s, l2_project(s, np.sin))
    assert l2 == pytest.approx(math.sqrt(math.pi / 2), rel=1e-5)
    assert h1 == pytest.approx(math.sqrt(math.pi / 2), rel=1e-4)
    assert norms(s, s.zeros()) == (0.0, 0.0)


def test_rayleigh_quotient_converges():
    gaps = []
    for M in (10, 20, 40):
        s = build_space("interval", M)
        c = l2_project(s, np.sin)
        gaps.append(abs(c @ (s.stiffness @ c) / (c @ (s.mass @ c)) - 1.0))
    assert gaps[0] / gaps[1] > 3.5 and gaps[1] / gaps[2] > 3.5


def test_evaluate_nodes_midpoints_boundary():
    s = build_space("interval", 10)
    c = np.arange(1.0, s.n_dofs + 1)
    assert evaluate(s, c, s.nodes[3, 0]) == pytest.approx(c[3])
    mid = 0.5 * (s.nodes[3, 0] + s.nodes[4, 0])
    assert evaluate(s, c, mid) == pytest.approx(0.5 * (c[3] + c[4]))
    assert evaluate(s, c, 0.0) == 0.0
    assert evaluate(s, c, math.pi) == 0.0
    with pytest.raises(ValueError):
        evaluate(s, c, 4.0)
    sq = build_space("square", 6)
    c2 = np.random.default_rng(0).standard_normal(sq.n_dofs)
    np.testing.assert_allclose(evaluate(sq, c2, sq.nodes), c2, atol=1e-14)
    assert evaluate(sq, c2, [0.0, 0.3]) == 0.0
    with pytest.raises(ValueError):
        evaluate(sq, c2, [0.5, 1.5])


def test_evaluation_weights_are_barycentric_in_2d():
    sq = build_space("square", 8)
    f = lambda x, y: x * (1 - x) * y
    c = sq.interpolate(f)
    p = np.array([[0.3 * 1 / 8 + 2 / 8, 0.6 / 8 + 3 / 8]])  # inside one cell
    # barycentric combination of the three vertex values
    v = evaluation_matrix(sq, p)
    assert v.sum() == pytest.approx(1.0)
    assert evaluate(sq, c, p)[0] == pytest.approx(v @ c)


@settings(max_examples=30, deadline=None)
@given(beta=st.floats(-5, 5), seed=st.integers(0, 1000))
def test_evaluate_is_linear(beta, seed):
    s = build_space("square", 5)
    rng = np.random.default_rng(seed)
    u, w = rng.standard_normal((2, s.n_dofs))
    pts = rng.uniform(0, 1, size=(7, 2))
    lhs = evaluate(s, u + beta * w, pts)
    rhs = evaluate(s, u, pts) + beta * evaluate(s, w, pts)
    np.testing.assert_allclose(lhs, rhs, atol=1e-13 * (1 + abs(beta)) * 10)


def test_spectral_basis():
    b = spectral_basis("interval", 3)
    np.testing.assert_allclose(b.eigenvalues, [1, 4, 9])
    b2 = spectral_basis("square", 6)
    assert b2.eigenvalues[0] == pytest.approx(2 * math.pi**2)
    assert np.all(np.diff(b2.eigenvalues) >= 0)
    # orthonormality by quadrature
    x = (np.arange(4000) + 0.5) * math.pi / 4000
    phi = b(x)
    G = phi @ phi.T * (math.pi / 4000)
    np.testing.assert_allclose(G, np.eye(3), atol=1e-10)
    n = 300
    g = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(g, g)
    P = b2(X.ravel(), Y.ravel())
    np.testing.assert_allclose(P @ P.T / n**2, np.eye(6), atol=1e-10)


def test_hat_fourier_coefficients():
    b = spectral_basis("interval", 9)
    hat = lambda x: np.where(x <= math.pi / 2, x, math.pi - x)
    c = b.coefficients(hat)
    k = np.arange(1, 10)
    exact = math.sqrt(2 / math.pi) * 2 * np.sin(k * math.pi / 2) / k**2
    np.testing.assert_allclose(c, exact, atol=1e-10)


def test_l2_error_of_projection_is_second_order():
    errs = [l2_error(s, l2_project(s, np.sin), np.sin)
            for s in (build_space("interval", M) for M in (10, 20, 40))]
    assert math.log2(errs[0] / errs[1]) > 1.9
    assert math.log2(errs[1] / errs[2]) > 1.9


def test_field_csv_round_trip():
    for s in (build_space("interval", 7), build_space("square", 4)):
        c = np.random.default_rng(1).standard_normal(s.n_dofs)
        text = write_field_csv(s, c, header=["seed=1"])
        assert text.startswith("# seed=1\n")
        cols = text.splitlines()[1].split(",")
        assert cols[-1] == "value" and len(cols) == s.dim + 1
        np.testing.assert_array_equal(read_field_csv(s, io.StringIO(text)), c)


def test_check_field_rejects_wrong_length():
    s = build_space("interval", 5)
    with pytest.raises(ValueError):
        norms(s, np.zeros(3))
