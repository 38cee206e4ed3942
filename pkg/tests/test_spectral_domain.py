import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mfg_inverse.spectral_domain import (
    ResolutionError,
    SpaceGrid,
    SpaceTimeField,
    TimeGrid,
    build_interval_basis,
    build_square_basis,
    discrete_eigenvalue,
    flux_divergence,
    neumann_laplacian_apply,
    quadrature,
    spacetime_quadrature,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_grid_geometry():
    g = SpaceGrid(65)
    assert g.spacing * (g.points_per_axis - 1) == pytest.approx(1.0, abs=1e-15)
    assert g.total_measure == 1.0
    assert quadrature(g, np.ones(g.shape)) == 1.0
    g2 = SpaceGrid(17, dimension=2)
    assert g2.shape == (17, 17)
    assert quadrature(g2, np.ones(g2.shape)) == pytest.approx(1.0, abs=1e-14)


def test_time_grid_nodes():
    t = TimeGrid(0.5, 10)
    assert t.dt == pytest.approx(0.05)
    assert t.nodes[0] == 0.0 and t.nodes[-1] == pytest.approx(0.5)


def test_basis_first_modes(analytic_basis, space):
    beta0, f0 = analytic_basis.mode(0)
    assert beta0 == 0.0 and np.all(f0 == 1.0)
    beta1, f1 = analytic_basis.mode(1)
    assert beta1 == pytest.approx(9.8696044010893586, rel=1e-15)
    assert np.allclose(f1, np.sqrt(2) * np.cos(np.pi * space.axis))
    assert np.all(np.diff(analytic_basis.eigenvalues) > 0)


def test_basis_orthonormal_and_zero_mean(analytic_basis, space):
    G = np.array([[quadrature(space, a * b) for b in analytic_basis.functions]
                  for a in analytic_basis.functions])
    assert np.abs(G - np.eye(len(analytic_basis))).max() < 1e-10
    assert abs(quadrature(space, analytic_basis.functions[2] * analytic_basis.functions[3])) < 1e-10
    for f in analytic_basis.functions[1:]:
        assert abs(quadrature(space, f)) < 1e-10


def test_basis_discrete_neumann_rows(analytic_basis, space):
    h = space.spacing
    for beta, f in zip(analytic_basis.eigenvalues, analytic_basis.functions):
        left = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * h)
        right = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * h)
        bound = h**2 * beta**1.5 + 1e-12
        assert abs(left) <= bound and abs(right) <= bound


def test_resolution_error():
    with pytest.raises(ResolutionError):
        build_interval_basis(SpaceGrid(17), 9)
    build_interval_basis(SpaceGrid(17), 8)


def test_quadrature_examples(space):
    x = space.axis
    assert quadrature(space, 2 * np.cos(np.pi * x) ** 2) == pytest.approx(1.0, abs=1e-10)
    assert abs(quadrature(space, np.cos(np.pi * x))) < 1e-12


@given(a=finite, b=finite)
def test_quadrature_exact_for_affine(a, b):
    g = SpaceGrid(33)
    assert quadrature(g, a + b * g.axis) == pytest.approx(a + b / 2, abs=1e-12)


def test_laplacian_examples(space):
    x = space.axis
    assert np.all(neumann_laplacian_apply(space, np.ones(space.shape)) == 0.0)
    assert np.allclose(neumann_laplacian_apply(space, x**2)[1:-1], 2.0, atol=1e-9)
    with pytest.raises(ValueError):
        neumann_laplacian_apply(SpaceGrid(2), np.zeros(2))


@pytest.mark.parametrize("i", [1, 3, 8])
def test_laplacian_eigenvectors_exact(i, space):
    f = np.cos(i * np.pi * space.axis)
    lap = neumann_laplacian_apply(space, f)
    assert np.abs(lap + discrete_eigenvalue(i, space.spacing) * f).max() < 1e-9


def test_eigen_residual_slope_two():
    errs = []
    for n in (33, 65, 129, 257):
        g = SpaceGrid(n)
        f = np.sqrt(2) * np.cos(2 * np.pi * g.axis)
        errs.append(np.abs(neumann_laplacian_apply(g, f) + (2 * np.pi) ** 2 * f).max())
    slopes = -np.diff(np.log(errs)) / np.log(2)
    assert np.all(np.abs(slopes - 2) < 0.05)


@given(arrays(float, 21, elements=finite), arrays(float, 21, elements=finite))
def test_laplacian_self_adjoint(f, g):
    grid = SpaceGrid(21)
    lhs = quadrature(grid, neumann_laplacian_apply(grid, f) * g)
    rhs = quadrature(grid, f * neumann_laplacian_apply(grid, g))
    assert lhs == pytest.approx(rhs, abs=1e-9 * (1 + np.abs(f).max() * np.abs(g).max()) * 400)


@given(arrays(float, 21, elements=finite), arrays(float, 21, elements=finite))
def test_flux_divergence_conserves(m, u):
    grid = SpaceGrid(21)
    total = quadrature(grid, flux_divergence(grid, m, u))
    assert abs(total) < 1e-10 * (1 + np.abs(m).max() * np.abs(u).max()) * 400


def test_full_basis_complete(space, full_basis):
    F = full_basis.functions
    G = (F * space.weights) @ F.T
    assert np.abs(G - np.eye(space.points_per_axis)).max() < 1e-12
    f = np.random.default_rng(1).standard_normal(space.shape)
    assert np.abs(full_basis.synthesize(full_basis.project(f)) - f).max() < 1e-12


def test_square_basis_tensor_modes():
    g = SpaceGrid(17, dimension=2)
    b = build_square_basis(g, 5)
    assert b.labels[0] == (0, 0)
    assert set(b.labels[1:3]) == {(0, 1), (1, 0)}
    lap = neumann_laplacian_apply(g, b.functions[3])
    assert np.abs(lap + b.eigenvalues[3] * b.functions[3]).max() < 0.1 * b.eigenvalues[3]


def test_spacetime_field_shape_check(space, time):
    with pytest.raises(ValueError):
        SpaceTimeField(np.zeros((3, 3)), space, time)
    f = SpaceTimeField.zeros(space, time)
    assert f.initial.shape == space.shape


def test_spacetime_quadrature_oracle():
    space, time = SpaceGrid(129), TimeGrid(1.0, 400)
    x, t = space.axis, time.nodes
    vals = np.multiply.outer(np.exp(-2 * t), 2 * np.cos(np.pi * x) ** 2)
    exact = 0.432332358381693654  # (1 - e^-2) / 2
    assert spacetime_quadrature(vals, space, time, "simpson") == pytest.approx(exact, abs=1e-10)
    assert spacetime_quadrature(vals, space, time) == pytest.approx(exact, abs=1e-5)
