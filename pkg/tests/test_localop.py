import numpy as np
import pytest
import scipy.linalg

from conftest import REF_TRIANGLE, SHAPES, random_polynomial, single_element_mesh
from hho_plate.errors import ConfigError
from hho_plate.fields import SeparableField
from hho_plate.generators import generate_unit_square
from hho_plate.localop import (
    LocalDofVector,
    LocalOperators,
    affine_interpolates,
    boundary_difference,
    coercivity_bounds,
    element_space,
    face_mass_matrix,
    interpolate,
    local_key,
    reconstruct,
    reconstruction_matrix,
    residual_operator,
    virtual_work_residual,
)
from hho_plate.polyspace import ElementBasis, MaterialTensor, energy_project, l2_project

ORTHO = MaterialTensor.from_upper([2.0, 0.3, 0.1, 1.5, 0.0, 0.8])


def _space(vertices, k, material=ORTHO):
    return element_space(single_element_mesh(vertices), 0, k, material)


def test_interpolate_constant(shape):
    space, origin = _space(shape, 2)
    dofs = interpolate(space, 3.0, origin)
    area = space.quadrature.measure
    assert dofs.element[0] == pytest.approx(3.0 * np.sqrt(area))
    assert np.allclose(dofs.element[1:], 0.0, atol=1e-13)
    assert np.allclose(dofs.grad, 0.0)
    lengths = [face.length for face in space.faces]
    assert np.allclose(dofs.trace[:, 0], 3.0 * np.sqrt(lengths))
    assert np.allclose(dofs.trace[:, 1:], 0.0, atol=1e-13)


def test_interpolate_x_squared_on_triangle():
    space, origin = _space(REF_TRIANGLE, 1)
    dofs = interpolate(space, SeparableField.from_monomials({(2, 0): 1.0}), origin)
    # bottom face y = 0: trace x^2 projected onto P^1 is x - 1/6, gradient (2x, 0) is exact
    face = space.faces[0]
    x = face.points[:, 0] + origin[0]
    assert np.allclose(face.psi @ dofs.grad[0, 0], 2.0 * x, atol=1e-12)
    assert np.allclose(face.psi @ dofs.grad[0, 1], 0.0, atol=1e-12)
    assert np.allclose(face.psi @ dofs.trace[0], x - 1.0 / 6.0, atol=1e-12)
    # hypotenuse x + y = 1: gradient is still (2x, 0), linear along the face
    hyp = space.faces[1]
    assert np.allclose(hyp.psi @ dofs.grad[1, 0], 2.0 * (hyp.points[:, 0] + origin[0]), atol=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_reconstruction_of_interpolate_is_exact(rng, shape, k):
    space, origin = _space(shape, k)
    rec = reconstruction_matrix(space)
    for _ in range(50):
        v = random_polynomial(rng, k + 2)
        coef = reconstruct(space, interpolate(space, v, origin), rec)
        expected = l2_project(space.basis, v, space.quadrature, origin)
        assert np.abs(coef - expected).max() <= 1e-10 * max(1.0, np.abs(expected).max())


@pytest.mark.parametrize("k", [1, 2, 3])
def test_reconstruction_right_hand_side_forms_agree(shape, k):
    space, _ = _space(shape, k)
    divdiv = reconstruction_matrix(space)
    hessian = reconstruction_matrix(space, form="hessian")
    assert np.abs(divdiv - hessian).max() <= 1e-10 * np.abs(divdiv).max()
    with pytest.raises(ValueError, match="reconstruction form"):
        reconstruction_matrix(space, form="mixed")


@pytest.mark.parametrize("k", [1, 2])
def test_reconstruction_commutes_with_energy_projection(k):
    vertices = SHAPES["hexagon"] * 0.4 + np.array([0.6, 0.3])
    space, origin = _space(vertices, k)
    v = SeparableField.sine_product(1.3, 0.7, 0.2, 0.5)
    coef = reconstruct(space, interpolate(space, v, origin))
    basis = ElementBasis(space.vertices, k + 2)
    expected = energy_project(basis, ORTHO, v, origin=origin)
    pts = space.quadrature.points
    assert np.allclose(space.basis.evaluate(coef, pts), basis.evaluate(expected, pts), atol=1e-9)


def test_affine_interpolate_reconstructs_itself():
    space, origin = _space(SHAPES["square"], 2)
    v = SeparableField.from_monomials({(0, 0): -1.0, (1, 0): 0.5, (0, 1): 2.0})
    coef = reconstruct(space, interpolate(space, v, origin))
    pts = space.quadrature.points
    assert np.allclose(space.basis.evaluate(coef, pts), v.value(pts + origin), atol=1e-12)


@pytest.mark.parametrize("k", [1, 3])
def test_stabilization_vanishes_on_polynomials(rng, shape, k):
    space, origin = _space(shape, k)
    ops = LocalOperators(space, 1.0)
    dofs = interpolate(space, random_polynomial(rng, k + 2), origin).to_array()
    assert np.abs(ops.stabilization @ dofs).max() <= 1e-9 * np.abs(ops.stabilization).max() * np.abs(dofs).max()


def test_stabilization_is_positive_semidefinite(shape):
    ops = LocalOperators(_space(shape, 2)[0], 1.0)
    eig = np.linalg.eigvalsh(ops.stabilization)
    assert eig[0] >= -1e-12 * eig[-1]


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_local_kernel_is_affine(shape, k):
    space, _ = _space(shape, k)
    ops = LocalOperators(space, 1.0)
    assert np.allclose(ops.matrix, ops.matrix.T, atol=1e-12 * np.abs(ops.matrix).max())
    affine = affine_interpolates(space)
    assert np.abs(ops.matrix @ affine).max() <= 1e-9 * np.abs(ops.matrix).max()
    comp = scipy.linalg.null_space(affine.T)
    # positive definite away from the affine functions
    np.linalg.cholesky(comp.T @ ops.matrix @ comp)


def test_eta_scales_stabilization_only():
    space, _ = _space(SHAPES["hexagon"], 2)
    one, three = LocalOperators(space, 1.0), LocalOperators(space, 3.0)
    assert np.allclose(one.reconstruction, three.reconstruction)
    assert np.allclose(three.matrix - one.matrix, 2.0 * one.stabilization, atol=1e-10 * np.abs(one.matrix).max())


def test_invalid_parameters():
    with pytest.raises(ConfigError, match="k=0"):
        _space(REF_TRIANGLE, 0)
    space, _ = _space(REF_TRIANGLE, 1)
    for eta in (0.0, -1.0):
        with pytest.raises(ConfigError, match="eta"):
            LocalOperators(space, eta)


def test_boundary_difference_vanishes_on_element_polynomials(rng, shape):
    space, origin = _space(shape, 2)
    ops = LocalOperators(space, 1.0)
    dofs = interpolate(space, random_polynomial(rng, 2), origin)
    for grad, trace in boundary_difference(ops, dofs):
        assert np.allclose(grad, 0.0, atol=1e-11)
        assert np.allclose(trace, 0.0, atol=1e-11)


def test_stabilization_depends_only_on_differences(shape):
    space, _ = _space(shape, 2)
    ops = LocalOperators(space, 1.0)
    nk = space.nk
    rebuilt = ops.difference.T @ ops.stabilization[nk:, nk:] @ ops.difference
    assert np.allclose(ops.stabilization, rebuilt, atol=1e-10 * np.abs(ops.stabilization).max())


def test_residual_represents_stabilization(rng, shape):
    space, _ = _space(shape, 2)
    ops = LocalOperators(space, 2.5)
    v, w = rng.standard_normal((2, space.size))
    rv = ops.residual @ v
    lhs = rv @ face_mass_matrix(space) @ (ops.difference @ w)
    assert lhs == pytest.approx(2.5 * v @ ops.stabilization @ w, rel=1e-9, abs=1e-9)
    pairs = residual_operator(ops, v)
    assert len(pairs) == space.n_faces
    assert np.allclose(np.concatenate([np.concatenate([g.ravel(), t]) for g, t in pairs]), rv)
    assert np.allclose(ops.residual @ (2.0 * v - w), 2.0 * rv - ops.residual @ w)


def test_virtual_work_identity(rng, shape):
    space, _ = _space(shape, 2)
    ops = LocalOperators(space, 1.7)
    dofs = rng.standard_normal(space.size)
    load = ops.matrix[: space.nk] @ dofs
    assert np.abs(virtual_work_residual(ops, dofs, load)).max() <= 1e-9 * np.abs(load).max()


def test_translated_elements_share_operators():
    mesh = generate_unit_square("cartesian", 3)
    keys = {local_key(mesh, t, 2, ORTHO) for t in range(mesh.n_elements)}
    # face orientation flags split the grid into four classes
    assert len(keys) == 4
    assert local_key(mesh, 4, 2, ORTHO) == local_key(mesh, 8, 2, ORTHO)
    assert local_key(mesh, 0, 2, ORTHO) != local_key(mesh, 4, 2, ORTHO)
    a, _ = element_space(mesh, 4, 2, ORTHO)
    b, _ = element_space(mesh, 8, 2, ORTHO)
    assert np.allclose(LocalOperators(a, 1.0).matrix, LocalOperators(b, 1.0).matrix, atol=1e-10)


def test_dilation_scaling():
    base = SHAPES["hexagon"] + np.array([0.2, 0.1])
    energies = []
    for lam in (1.0, 0.5):
        space, origin = _space(base * lam, 1)
        v = SeparableField.sine_product(1.5 / lam, 2.0 / lam, 0.3, 0.7)
        energies.append(LocalOperators(space, 1.0).energy(interpolate(space, v, origin).to_array()))
    assert energies[1] == pytest.approx(4.0 * energies[0], rel=1e-9)


@pytest.mark.parametrize("eta", [0.1, 1.0, 10.0])
def test_norm_equivalence(shape, eta):
    lower, upper = coercivity_bounds(LocalOperators(_space(shape, 2)[0], eta))
    assert 0 < lower <= upper
    assert lower >= 1e-3 * min(eta, 1.0)
    assert upper <= 1e3 * max(eta, 1.0)


def test_local_dof_vector_round_trip(rng):
    values = rng.standard_normal(6 + 9 * 4)
    dofs = LocalDofVector.from_array(values, 2, 4)
    assert dofs.grad.shape == (4, 2, 3)
    assert np.array_equal(dofs.to_array(), values)
    with pytest.raises(ValueError, match="local unknowns"):
        LocalDofVector.from_array(values[:-1], 2, 4)
