"""Element-local HHO operators for the plate problem.

Local unknowns are laid out as [v_T] followed, for each face in element order, by
[v_grad_x, v_grad_y, v_F], every block holding coefficients in the orthonormal face basis.
Element spaces are built in coordinates relative to the element centroid: operators depend only
on the element shape, its face orientation flags and the material, so translated copies of an
element share them.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from hho_plate.errors import ConfigError
from hho_plate.fields import SeparableField, as_field
from hho_plate.polyspace import (
    SQRT2,
    ElementBasis,
    FaceBasis,
    affine_moments,
    hessian_stiffness,
    poly_dim,
    solve_closed,
)
from hho_plate.quadrature import element_quadrature, face_point_count, face_quadrature

logger = logging.getLogger(__name__)

KEY_DECIMALS = 12


def check_degree(k):
    if k < 1:
        raise ConfigError(f"polynomial degree k must be >= 1 (k=0 breaks coercivity), got k={k}")
    return int(k)


def _moment_voigt(hess, material):
    """M = -A hess in Voigt form; hess is (..., 3)."""
    return -hess @ material.matrix


@dataclass(frozen=True)
class FaceTables:
    """Integrals of one face basis against element basis quantities; rows face basis, cols element basis."""

    basis: FaceBasis
    points: np.ndarray
    weights: np.ndarray
    normal: np.ndarray
    length: float
    psi: np.ndarray
    mass: np.ndarray
    grad: np.ndarray
    trace: np.ndarray
    moment: np.ndarray
    shear: np.ndarray

    def project(self, table):
        return np.linalg.solve(self.mass, table)


class ElementSpace:
    """Basis, quadratures and face tables of one element shape.

    vertices: counterclockwise polygon in centroid-relative coordinates.
    signs: +1 where the element traverses the face in its stored direction, -1 otherwise.
    """

    def __init__(self, vertices, signs, k, material):
        self.k = check_degree(k)
        self.material = material
        self.vertices = np.asarray(vertices, dtype=float)
        self.signs = tuple(int(s) for s in signs)
        self.quadrature = element_quadrature(self.vertices, 2 * (self.k + 2))
        self.basis = ElementBasis(self.vertices, self.k + 2, self.quadrature)
        self.diameter = self.basis.diameter
        self.n_faces = len(self.vertices)
        self.nk = poly_dim(self.k)
        self.nb = self.basis.dim
        self.nf = self.k + 1
        self.face_block = 3 * self.nf
        self.size = self.nk + self.face_block * self.n_faces
        self.stiffness = hessian_stiffness(self.basis, material, self.quadrature)
        self.faces = [self._face_tables(j) for j in range(self.n_faces)]
        self.load_quadrature = element_quadrature(self.vertices, 2 * (self.k + 2) + 2)
        self.load_basis = self.basis.values(self.load_quadrature.points)

    def face_offset(self, j):
        return self.nk + self.face_block * j

    def _face_tables(self, j):
        a = self.vertices[j]
        b = self.vertices[(j + 1) % self.n_faces]
        d = b - a
        length = float(np.linalg.norm(d))
        normal = np.array([d[1], -d[0]]) / length
        fa, fb = (a, b) if self.signs[j] > 0 else (b, a)
        fbasis = FaceBasis(fa, fb, self.k)
        quad, _ = face_quadrature(fa, fb, face_point_count(self.k))
        pts, w = quad.points, quad.weights
        psi = fbasis.values(pts)
        wpsi = psi * w[:, None]
        grad = self.basis.gradient(pts)
        mom = _moment_voigt(self.basis.hessian_voigt(pts), self.material)
        mn_x = mom[..., 0] * normal[0] + mom[..., 2] / SQRT2 * normal[1]
        mn_y = mom[..., 2] / SQRT2 * normal[0] + mom[..., 1] * normal[1]
        mx = _moment_voigt(self.basis.hessian_voigt(pts, 1, 0), self.material)
        my = _moment_voigt(self.basis.hessian_voigt(pts, 0, 1), self.material)
        div_x = mx[..., 0] + my[..., 2] / SQRT2
        div_y = mx[..., 2] / SQRT2 + my[..., 1]
        return FaceTables(
            basis=fbasis,
            points=pts,
            weights=w,
            normal=normal,
            length=length,
            psi=psi,
            mass=psi.T @ wpsi,
            grad=np.stack([wpsi.T @ grad[..., 0], wpsi.T @ grad[..., 1]]),
            trace=wpsi.T @ self.basis.values(pts),
            moment=np.stack([wpsi.T @ mn_x, wpsi.T @ mn_y]),
            shear=wpsi.T @ (div_x * normal[0] + div_y * normal[1]),
        )

    def divdiv_moment(self, points):
        """div div M(phi_i) at points: (n_points, nb)."""
        mxx = _moment_voigt(self.basis.hessian_voigt(points, 2, 0), self.material)
        mxy = _moment_voigt(self.basis.hessian_voigt(points, 1, 1), self.material)
        myy = _moment_voigt(self.basis.hessian_voigt(points, 0, 2), self.material)
        return mxx[..., 0] + SQRT2 * mxy[..., 2] + myy[..., 1]


def element_space(mesh, t, k, material):
    """ElementSpace of mesh element t and its centroid (the origin of the local coordinates)."""
    origin = mesh.element_centroid[t]
    return ElementSpace(mesh.element_vertices(t) - origin, mesh.element_face_signs[t], k, material), origin


def local_key(mesh, t, k, material):
    """Hashable key shared by elements that are translates of each other."""
    local = np.round(mesh.element_vertices(t) - mesh.element_centroid[t], KEY_DECIMALS) + 0.0
    return (int(k), material.key(), tuple(int(s) for s in mesh.element_face_signs[t]), local.tobytes())


@dataclass
class LocalDofVector:
    element: np.ndarray
    grad: np.ndarray
    trace: np.ndarray

    @property
    def n_faces(self):
        return len(self.trace)

    def to_array(self):
        faces = np.concatenate([self.grad.reshape(self.n_faces, -1), self.trace], axis=1)
        return np.concatenate([self.element, faces.ravel()])

    @classmethod
    def from_array(cls, values, k, n_faces):
        values = np.asarray(values, dtype=float)
        nk, nf = poly_dim(k), k + 1
        if values.shape != (nk + 3 * nf * n_faces,):
            raise ValueError(f"expected {nk + 3 * nf * n_faces} local unknowns, got {values.shape}")
        faces = values[nk:].reshape(n_faces, 3, nf)
        return cls(values[:nk].copy(), faces[:, :2].copy(), faces[:, 2].copy())


def interpolate(space, v, origin=(0.0, 0.0)):
    """Local interpolate: L2 projections of v on T, of grad v and of v on each face."""
    v = as_field(v)
    origin = np.asarray(origin, dtype=float)
    lq = space.load_quadrature
    phi = space.load_basis[:, : space.nk]
    mass = phi.T @ (phi * lq.weights[:, None])
    element = np.linalg.solve(mass, phi.T @ (lq.weights * v.value(lq.points + origin)))
    grad = np.empty((space.n_faces, 2, space.nf))
    trace = np.empty((space.n_faces, space.nf))
    for j, face in enumerate(space.faces):
        pts = face.points + origin
        wpsi = face.psi * face.weights[:, None]
        g = v.gradient(pts)
        grad[j, 0] = face.project(wpsi.T @ g[:, 0])
        grad[j, 1] = face.project(wpsi.T @ g[:, 1])
        trace[j] = face.project(wpsi.T @ v.value(pts))
    return LocalDofVector(element, grad, trace)


RECONSTRUCTION_FORMS = ("divdiv", "hessian")


def _rhs_divdiv(space):
    """-(v_T, div div M_w)_T - sum_F (v_grad_F, M_w n)_F + sum_F (v_F, div M_w . n)_F"""
    quad = space.quadrature
    nk, nf = space.nk, space.nf
    phi = space.basis.values(quad.points)
    rhs = np.zeros((space.nb, space.size))
    rhs[:, :nk] = -(space.divdiv_moment(quad.points) * quad.weights[:, None]).T @ phi[:, :nk]
    for j, face in enumerate(space.faces):
        o = space.face_offset(j)
        rhs[:, o : o + nf] = -face.moment[0].T
        rhs[:, o + nf : o + 2 * nf] = -face.moment[1].T
        rhs[:, o + 2 * nf : o + 3 * nf] = face.shear.T
    return rhs


def _rhs_hessian(space):
    """(A hess v_T, hess w)_T - sum_F (v_grad_F - grad v_T, M_w n)_F + sum_F (v_F - v_T, div M_w . n)_F"""
    nk, nf, block = space.nk, space.nf, space.face_block
    delta = difference_matrix(space)
    rhs = np.zeros((space.nb, space.size))
    rhs[:, :nk] = space.stiffness[:, :nk]
    for j, face in enumerate(space.faces):
        o = block * j
        rhs -= face.moment[0].T @ delta[o : o + nf]
        rhs -= face.moment[1].T @ delta[o + nf : o + 2 * nf]
        rhs += face.shear.T @ delta[o + 2 * nf : o + 3 * nf]
    return rhs


def reconstruction_matrix(space, element=None, form="divdiv"):
    """Matrix mapping local unknowns to P^{k+2} coefficients of the deflection reconstruction.

    For each basis function w, (A hess p, hess w)_T equals the right-hand side of `form`:
    "divdiv" keeps v_T against div div M_w, "hessian" integrates it back by parts.
    Both are closed by pi^1 p = pi^1 v_T and give the same matrix.
    """
    if form not in RECONSTRUCTION_FORMS:
        raise ValueError(f"unknown reconstruction form '{form}', expected one of {', '.join(RECONSTRUCTION_FORMS)}")
    rhs = _rhs_divdiv(space) if form == "divdiv" else _rhs_hessian(space)
    closure = affine_moments(space.basis, space.quadrature)
    closure_rhs = np.zeros((3, space.size))
    closure_rhs[:, : space.nk] = closure[:, : space.nk]
    return solve_closed(space.stiffness, closure, rhs, closure_rhs, element)


def reconstruct(space, dofs, reconstruction=None):
    """P^{k+2} coefficients of the reconstruction of a LocalDofVector (or flat array)."""
    if isinstance(dofs, LocalDofVector):
        dofs = dofs.to_array()
    rec = reconstruction if reconstruction is not None else reconstruction_matrix(space)
    return rec @ np.asarray(dofs, dtype=float)


def _selector(space, j, component):
    """Picks face j's block `component` (0, 1: gradient, 2: trace) out of the local unknowns."""
    sel = np.zeros((space.nf, space.size))
    o = space.face_offset(j) + component * space.nf
    sel[:, o : o + space.nf] = np.eye(space.nf)
    return sel


def _weights(space):
    ap, h = space.material.upper, space.diameter
    return ap / h ** 4, ap / h, ap / h ** 3


def stabilization_matrix(space, reconstruction):
    w_elem, w_grad, w_trace = _weights(space)
    nk = space.nk
    diff = reconstruction[:nk].copy()
    diff[:, :nk] -= np.eye(nk)
    stab = w_elem * diff.T @ diff
    for j, face in enumerate(space.faces):
        for c in (0, 1):
            d = face.project(face.grad[c] @ reconstruction) - _selector(space, j, c)
            stab += w_grad * d.T @ face.mass @ d
        d = face.project(face.trace @ reconstruction) - _selector(space, j, 2)
        stab += w_trace * d.T @ face.mass @ d
    return 0.5 * (stab + stab.T)


def difference_matrix(space):
    """Maps local unknowns to the face-block vector of (v_grad_F - grad v_T, v_F - v_T)."""
    nk, nf = space.nk, space.nf
    delta = np.zeros((space.size - nk, space.size))
    delta[:, nk:] = np.eye(space.size - nk)
    for j, face in enumerate(space.faces):
        o = space.face_block * j
        for c in (0, 1):
            delta[o + c * nf : o + (c + 1) * nf, :nk] = -face.project(face.grad[c][:, :nk])
        delta[o + 2 * nf : o + 3 * nf, :nk] = -face.project(face.trace[:, :nk])
    return delta


def face_mass_matrix(space):
    return scipy.linalg.block_diag(*[face.mass for face in space.faces for _ in range(3)])


def seminorm_matrix(space, delta):
    """||v||^2_{A,T} = ||A^1/2 hess v_T||^2 + A+/h sum ||v_grad_F - grad v_T||^2 + A+/h^3 sum ||v_F - v_T||^2"""
    _, w_grad, w_trace = _weights(space)
    nk = space.nk
    blocks = [m for face in space.faces for m in (w_grad * face.mass, w_grad * face.mass, w_trace * face.mass)]
    norm = delta.T @ scipy.linalg.block_diag(*blocks) @ delta
    norm[:nk, :nk] += space.stiffness[:nk, :nk]
    return 0.5 * (norm + norm.T)


class LocalOperators:
    """Reconstruction, stabilization and local form of one element shape for a fixed eta."""

    def __init__(self, space, eta, element=None):
        if not eta > 0:
            raise ConfigError(f"stabilization parameter eta must be > 0, got {eta}")
        self.space = space
        self.eta = float(eta)
        self.reconstruction = reconstruction_matrix(space, element)
        p = self.reconstruction
        self.consistency = 0.5 * (p.T @ space.stiffness @ p + (p.T @ space.stiffness @ p).T)
        self.stabilization = stabilization_matrix(space, p)
        self.matrix = self.consistency + self.eta * self.stabilization
        self.difference = difference_matrix(space)
        self.seminorm = seminorm_matrix(space, self.difference)
        nk = space.nk
        # (R v, alpha)_{0,dT} = eta * s_T((0, delta v), (0, alpha))
        self.residual = np.linalg.solve(
            face_mass_matrix(space), self.eta * self.stabilization[nk:, nk:] @ self.difference
        )

    @property
    def size(self):
        return self.space.size

    @property
    def a_tt(self):
        return self.matrix[: self.space.nk, : self.space.nk]

    @property
    def a_tf(self):
        return self.matrix[: self.space.nk, self.space.nk :]

    @property
    def a_ff(self):
        return self.matrix[self.space.nk :, self.space.nk :]

    def energy(self, dofs):
        return float(dofs @ self.matrix @ dofs)


def local_form(space, eta=1.0, element=None):
    return LocalOperators(space, eta, element)


def affine_interpolates(space):
    """Columns: local interpolates of 1, x, y (centroid-relative); they span the kernel of the local form."""
    fields = [SeparableField.from_monomials({e: 1.0}) for e in ((0, 0), (1, 0), (0, 1))]
    return np.column_stack([interpolate(space, v).to_array() for v in fields])


def coercivity_bounds(ops):
    """Extreme ratios a_T(v, v) / ||v||^2_{A,T} over local unknowns outside the affine kernel."""
    comp = scipy.linalg.null_space(affine_interpolates(ops.space).T)
    ratios = scipy.linalg.eigh(comp.T @ ops.matrix @ comp, comp.T @ ops.seminorm @ comp, eigvals_only=True)
    return float(ratios[0]), float(ratios[-1])


def _split_faces(space, values):
    faces = values.reshape(space.n_faces, 3, space.nf)
    return faces[:, :2], faces[:, 2]


def boundary_difference(ops, dofs):
    """Per face (delta_grad (2, k+1), delta_F (k+1,)) as face-basis coefficients."""
    if isinstance(dofs, LocalDofVector):
        dofs = dofs.to_array()
    grad, trace = _split_faces(ops.space, ops.difference @ dofs)
    return list(zip(grad, trace))


def residual_operator(ops, dofs):
    """Per face (R_grad (2, k+1), R_F (k+1,)) as face-basis coefficients."""
    if isinstance(dofs, LocalDofVector):
        dofs = dofs.to_array()
    grad, trace = _split_faces(ops.space, ops.residual @ dofs)
    return list(zip(grad, trace))


def load_vector(space, f, origin=(0.0, 0.0)):
    """(f, phi_j)_T for the P^k element basis, exactness 2(k+2)+2."""
    f = as_field(f)
    lq = space.load_quadrature
    values = f.value(lq.points + np.asarray(origin, dtype=float))
    return space.load_basis[:, : space.nk].T @ (lq.weights * values)


def face_fluxes(ops, dofs):
    """Discrete moments (n_faces, 2, k+1) and shear forces (n_faces, k+1) in face-basis coefficients.

    M_TF = (M p) n - R_grad and S_TF = div M p . n + R_F, with M p = -A hess p.
    """
    space = ops.space
    p = ops.reconstruction @ dofs
    r_grad, r_trace = _split_faces(space, ops.residual @ dofs)
    moments = np.empty((space.n_faces, 2, space.nf))
    shears = np.empty((space.n_faces, space.nf))
    for j, face in enumerate(space.faces):
        moments[j, 0] = face.project(face.moment[0] @ p) - r_grad[j, 0]
        moments[j, 1] = face.project(face.moment[1] @ p) - r_grad[j, 1]
        shears[j] = face.project(face.shear @ p) + r_trace[j]
    return moments, shears


def virtual_work_residual(ops, dofs, load):
    """a_T(p u, v_T) + sum_F (M_TF, grad v_T)_F - sum_F (S_TF, v_T)_F - (f, v_T)_T per P^k basis function."""
    space = ops.space
    nk = space.nk
    p = ops.reconstruction @ dofs
    moments, shears = face_fluxes(ops, dofs)
    res = space.stiffness[:, :nk].T @ p - load
    for j, face in enumerate(space.faces):
        res += moments[j, 0] @ face.grad[0][:, :nk] + moments[j, 1] @ face.grad[1][:, :nk]
        res -= shears[j] @ face.trace[:, :nk]
    return res


def hessian_norm(space, coef):
    """||hess p||_T of P^{k+2} coefficients (Frobenius norm pointwise)."""
    quad = space.quadrature
    h = space.basis.hessian_voigt(quad.points)
    vals = np.einsum("qis,i->qs", h, coef)
    return math.sqrt(max(float(np.dot(quad.weights, (vals ** 2).sum(axis=1))), 0.0))
