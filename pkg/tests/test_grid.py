import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chemosim.grid import (Grid, build_grid, cell_gradient_sq, face_gradient, integrate, neumann_laplacian,
                           read_snapshot, sup_norm, write_snapshot)
from oracles import fsum_integral, sparse_laplacian


def test_build_grid_square():
    g = build_grid(4, 4, 1, 1)
    assert g.hx == g.hy == 0.25
    assert g.cell_area == 0.0625


def test_build_grid_rectangle():
    g = build_grid(8, 4, 2, 1)
    assert g.hx == g.hy == 0.25


@pytest.mark.parametrize("args", [(3, 4, 1, 1), (4, 3, 1, 1), (4, 4, 0, 1), (4, 4, 1, -1)])
def test_build_grid_rejects(args):
    with pytest.raises(ValueError):
        build_grid(*args)


def test_area_matches_sum_of_cells():
    g = build_grid(7, 5, 1.3, 0.7)
    assert g.nx * g.ny * g.cell_area == pytest.approx(g.area, rel=1e-15)


def test_integrate_constants():
    assert integrate(np.ones((4, 4)), build_grid(4, 4)) == 1.0
    g = build_grid(6, 5, 2.0, 3.0)
    assert integrate(np.full(g.shape, 1.5), g) == pytest.approx(1.5 * 6.0, rel=1e-15)


def test_integrate_matches_compensated_sum():
    rng = np.random.default_rng(3)
    g = build_grid(8, 8)
    f = rng.normal(size=g.shape)
    ref = fsum_integral(f, g.hx, g.hy, rng)
    assert integrate(f, g) == pytest.approx(ref, rel=1e-14, abs=1e-15)


def test_sup_norm():
    assert sup_norm(np.full((4, 4), 2.0)) == 2.0
    f = np.zeros((4, 4))
    f[1, 2] = 5
    assert sup_norm(f) == 5
    rng = np.random.default_rng(0)
    f = rng.normal(size=(8, 8))
    best = 0.0
    for x in f.ravel():
        best = max(best, abs(x))
    assert sup_norm(f) == best


def test_face_gradient_constant_is_zero():
    g = build_grid(5, 6)
    fg = face_gradient(np.full(g.shape, 3.0), g)
    assert not fg.x.any() and not fg.y.any()


def test_face_gradient_linear_exact():
    g = build_grid(8, 4)
    X, _ = g.centers()
    fg = face_gradient(X, g)
    np.testing.assert_allclose(fg.x[:, 1:-1], 1.0, rtol=1e-13)
    assert not fg.x[:, [0, -1]].any()
    assert not fg.y.any()


def test_face_gradient_quadratic_second_order():
    g = build_grid(10, 4, 1.0, 1.0)
    X, _ = g.centers()
    fg = face_gradient(X ** 2, g)
    xf, _ = g.x_faces()
    # centered difference of x^2 is exact at the face midpoint
    np.testing.assert_allclose(fg.x[:, 1:-1], 2 * xf[:, 1:-1], atol=1e-12)


def test_laplacian_constant_zero():
    g = build_grid(6, 6)
    assert not neumann_laplacian(np.full(g.shape, 2.0), g).any()


def test_laplacian_cosine_conserves():
    g = build_grid(16, 8, 2.0, 1.0)
    X, _ = g.centers()
    lap = neumann_laplacian(np.cos(np.pi * X / g.Lx), g)
    assert abs(integrate(lap, g)) <= 1e-12


def test_laplacian_matches_sparse_assembly():
    rng = np.random.default_rng(1)
    g = build_grid(9, 7, 1.0, 0.8)
    f = rng.normal(size=g.shape)
    ref = (sparse_laplacian(g.nx, g.ny, g.hx, g.hy) @ f.ravel()).reshape(g.shape)
    np.testing.assert_allclose(neumann_laplacian(f, g), ref, rtol=1e-13, atol=1e-13 * np.abs(ref).max())


def test_cell_gradient_sq_linear():
    g = build_grid(8, 8)
    _, Y = g.centers()
    gs = cell_gradient_sq(Y, g)
    # interior cells see two faces of slope 1; edge cells only one
    np.testing.assert_allclose(gs[1:-1, :], 1.0, rtol=1e-12)
    np.testing.assert_allclose(gs[[0, -1], :], 0.5, rtol=1e-12)


def test_snapshot_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    g = build_grid(5, 4, 1.5, 0.5)
    f = rng.normal(size=g.shape)
    write_snapshot(tmp_path / "s.csv", f, g, 0.125)
    head = (tmp_path / "s.csv").read_text().splitlines()[0]
    assert head == "# 5,4,1.5,0.5,0.125"
    back, g2, t = read_snapshot(tmp_path / "s.csv")
    assert g2 == g and t == 0.125
    assert np.array_equal(back, f)


def test_check_rejects_wrong_shape():
    with pytest.raises(ValueError):
        integrate(np.ones((4, 5)), build_grid(4, 4))


grids = st.builds(Grid, st.integers(4, 12), st.integers(4, 12),
                  st.floats(0.1, 5.0), st.floats(0.1, 5.0))
bounded = st.floats(-1e3, 1e3, allow_nan=False)


@st.composite
def grid_and_fields(draw, n=2):
    g = draw(grids)
    fs = [draw(arrays(float, g.shape, elements=bounded)) for _ in range(n)]
    return g, fs


@settings(max_examples=60, deadline=None)
@given(grid_and_fields(1))
def test_prop_laplacian_conservation(gf):
    g, (f,) = gf
    lap = neumann_laplacian(f, g)
    tol = 1e-12 * (1 + np.abs(f).max()) * g.area
    assert abs(integrate(lap, g)) <= tol


@settings(max_examples=60, deadline=None)
@given(grid_and_fields(2), st.floats(-10, 10), st.floats(-10, 10))
def test_prop_laplacian_linearity(gf, a, b):
    g, (f, h) = gf
    lhs = neumann_laplacian(a * f + b * h, g)
    rhs = a * neumann_laplacian(f, g) + b * neumann_laplacian(h, g)
    scale = (abs(a) * np.abs(f).max() + abs(b) * np.abs(h).max() + 1) / min(g.hx, g.hy) ** 2
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * scale)


@settings(max_examples=60, deadline=None)
@given(grid_and_fields(2))
def test_prop_laplacian_symmetry(gf):
    g, (f, h) = gf
    lhs = integrate(neumann_laplacian(f, g) * h, g)
    rhs = integrate(f * neumann_laplacian(h, g), g)
    scale = (np.abs(f).max() + 1) * (np.abs(h).max() + 1) * g.area / min(g.hx, g.hy) ** 2
    assert abs(lhs - rhs) <= 1e-12 * scale


@settings(max_examples=30, deadline=None)
@given(grids, st.floats(-100, 100))
def test_prop_gradient_of_constant(g, c):
    fg = face_gradient(np.full(g.shape, c), g)
    assert not fg.x.any() and not fg.y.any()
