"""Polynomial spaces on elements and faces, L2 and energy projectors, material tensors.

Element bases are L2(T)-orthonormal combinations of the scaled monomials
((x - x_T)/h_T)^p ((y - y_T)/h_T)^q in graded order, so the first dim P^l functions of a
degree-L basis span P^l for every l <= L. Face bases are scaled Legendre polynomials in the
arc-length parameter along the face.

Symmetric 2x2 tensors are handled in the orthonormal Voigt frame (e11, e22, sqrt(2) e12):
a Hessian becomes (v_xx, v_yy, sqrt(2) v_xy) and the material tensor a symmetric 3x3 matrix V.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from numpy.polynomial import legendre
from scipy.special import perm

from hho_plate.errors import ConfigError, SingularLocalSystemError
from hho_plate.fields import SeparableField, as_field
from hho_plate.mesh import polygon_centroid, polygon_diameter
from hho_plate.quadrature import element_quadrature, face_quadrature

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)


def poly_dim(degree):
    return (degree + 1) * (degree + 2) // 2


def monomial_exponents(degree):
    return [(d - j, j) for d in range(degree + 1) for j in range(d + 1)]


class MaterialTensor:
    """Constant fourth-order tensor A acting on symmetric 2x2 tensors, stored as Voigt matrix V."""

    def __init__(self, matrix):
        v = np.array(matrix, dtype=float).reshape(3, 3)
        scale = max(1.0, float(np.abs(v).max()))
        if np.abs(v - v.T).max() > 1e-14 * scale:
            raise ConfigError("material matrix must be symmetric")
        v = 0.5 * (v + v.T)
        eig = np.linalg.eigvalsh(v)
        if eig[0] <= 0.0:
            raise ConfigError(f"material matrix must be positive definite (smallest eigenvalue {eig[0]:.3e})")
        v.setflags(write=False)
        self.matrix = v
        self.lower = float(eig[0])
        self.upper = float(eig[-1])

    @classmethod
    def identity(cls):
        return cls(np.eye(3))

    @classmethod
    def from_upper(cls, values):
        """V11 V12 V13 V22 V23 V33"""
        values = [float(x) for x in values]
        if len(values) != 6:
            raise ConfigError(f"material needs 6 numbers (V11 V12 V13 V22 V23 V33), got {len(values)}")
        a, b, c, d, e, f = values
        return cls([[a, b, c], [b, d, e], [c, e, f]])

    @classmethod
    def isotropic_plate(cls, rigidity, poisson):
        """Kirchhoff plate: A = D((1 - nu) I + nu 1 x 1)."""
        if not -1.0 < poisson < 0.5:
            raise ConfigError(f"Poisson ratio must lie in (-1, 0.5), got {poisson}")
        nu = poisson
        return cls(rigidity * np.array([[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, 1.0 - nu]]))

    def key(self):
        return tuple(np.round(self.matrix.ravel(), 15))

    def __eq__(self, other):
        return isinstance(other, MaterialTensor) and np.array_equal(self.matrix, other.matrix)

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"MaterialTensor(A-={self.lower:.4g}, A+={self.upper:.4g})"


class ElementBasis:
    """L2(T)-orthonormal basis of P^degree(T) on a polygon."""

    def __init__(self, vertices, degree, quadrature=None):
        self.vertices = np.asarray(vertices, dtype=float)
        self.degree = int(degree)
        self.center = polygon_centroid(self.vertices)
        self.diameter = polygon_diameter(self.vertices)
        self.quadrature = quadrature or element_quadrature(self.vertices, 2 * self.degree)
        exps = np.array(monomial_exponents(self.degree))
        self._p, self._q = exps[:, 0], exps[:, 1]
        self.coeffs = self._orthonormalize()

    @property
    def dim(self):
        return len(self._p)

    def _orthonormalize(self):
        q = self.quadrature
        sw = np.sqrt(q.weights)[:, None]
        vand = self.monomials(q.points)
        _, r = np.linalg.qr(vand * sw)
        r = r * np.sign(np.diag(r))[:, None]
        coeffs = scipy.linalg.solve_triangular(r, np.eye(self.dim))
        # one re-orthonormalization pass against the quadrature Gram matrix
        phi = vand @ coeffs
        gram = phi.T @ (phi * q.weights[:, None])
        chol = np.linalg.cholesky(gram)
        return scipy.linalg.solve_triangular(chol, coeffs.T, lower=True).T

    def monomials(self, points, a=0, b=0):
        points = np.atleast_2d(points)
        h = self.diameter
        xi = (points[:, 0] - self.center[0]) / h
        eta = (points[:, 1] - self.center[1]) / h
        pa, qb = self._p - a, self._q - b
        factor = perm(self._p, a) * perm(self._q, b) / h ** (a + b)
        vals = factor * xi[:, None] ** np.maximum(pa, 0) * eta[:, None] ** np.maximum(qb, 0)
        return np.where((pa >= 0) & (qb >= 0), vals, 0.0)

    def derivative(self, points, a=0, b=0):
        """d^a/dx^a d^b/dy^b of every basis function: (n_points, dim)."""
        return self.monomials(points, a, b) @ self.coeffs

    def values(self, points):
        return self.derivative(points)

    def gradient(self, points):
        return np.stack([self.derivative(points, 1, 0), self.derivative(points, 0, 1)], axis=-1)

    def hessian_voigt(self, points, a=0, b=0):
        """d^a/dx^a d^b/dy^b of (phi_xx, phi_yy, sqrt(2) phi_xy): (n_points, dim, 3)."""
        return np.stack(
            [
                self.derivative(points, 2 + a, b),
                self.derivative(points, a, 2 + b),
                SQRT2 * self.derivative(points, 1 + a, 1 + b),
            ],
            axis=-1,
        )

    def evaluate(self, coef, points, a=0, b=0):
        return self.derivative(points, a, b) @ coef

    def as_field(self, coef, origin=(0.0, 0.0)):
        """Polynomial with the given coefficients as a SeparableField in absolute coordinates."""
        c = self.coeffs @ np.asarray(coef, dtype=float)
        h = self.diameter
        x0, y0 = self.center + np.asarray(origin)
        terms = {}
        for ci, p, q in zip(c, self._p, self._q):
            # ((x - x0)/h)^p ((y - y0)/h)^q expanded in x^i y^j
            for i in range(p + 1):
                for j in range(q + 1):
                    coef_ij = ci * math.comb(p, i) * math.comb(q, j) * (-x0) ** (p - i) * (-y0) ** (q - j) / h ** (p + q)
                    terms[(i, j)] = terms.get((i, j), 0.0) + coef_ij
        return SeparableField.from_monomials(terms)


class FaceBasis:
    """L2(F)-orthonormal Legendre basis of P^degree(F); parameter runs from a to b."""

    def __init__(self, a, b, degree):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.degree = int(degree)
        d = self.b - self.a
        self.length = float(np.linalg.norm(d))
        self.tangent = d / self.length
        self.midpoint = 0.5 * (self.a + self.b)
        self._scale = np.sqrt((2.0 * np.arange(self.degree + 1) + 1.0) / self.length)

    @property
    def dim(self):
        return self.degree + 1

    def parameter(self, points):
        return (np.atleast_2d(points) - self.midpoint) @ self.tangent / (0.5 * self.length)

    def values_at(self, s):
        return legendre.legvander(np.asarray(s, dtype=float), self.degree) * self._scale

    def values(self, points):
        return self.values_at(self.parameter(points))

    def quadrature(self, n_points=None):
        n = n_points or self.degree + 2
        quad, _ = face_quadrature(self.a, self.b, n)
        return quad


def l2_project(basis, f, quadrature=None, origin=(0.0, 0.0)):
    """Coefficients of the L2-orthogonal projection of f onto span(basis).

    The mass matrix is solved even though the bases are orthonormal, so a quadrature other
    than the one the basis was built with is handled consistently.
    """
    if quadrature is None:
        quadrature = (
            basis.quadrature(basis.degree + 2)
            if isinstance(basis, FaceBasis)
            else element_quadrature(basis.vertices, 2 * basis.degree + 2)
        )
    phi = basis.values(quadrature.points)
    f = as_field(f)
    fv = f.value(quadrature.points + np.asarray(origin))
    mass = phi.T @ (phi * quadrature.weights[:, None])
    rhs = phi.T @ (quadrature.weights * fv)
    return scipy.linalg.solve(mass, rhs, assume_a="pos")


def hessian_stiffness(basis, material, quadrature):
    """(A grad^2 phi_i, grad^2 phi_j)_T"""
    hess = basis.hessian_voigt(quadrature.points)
    return np.einsum("q,qis,st,qjt->ij", quadrature.weights, hess, material.matrix, hess)


def affine_moments(basis, quadrature):
    """Moments (phi_i, phi_m)_T against the first three (P^1-spanning) basis functions: (3, dim)."""
    phi = basis.values(quadrature.points)
    return (phi[:, :3] * quadrature.weights[:, None]).T @ phi


def solve_closed(stiffness, closure, rhs, closure_rhs, element=None):
    """Solves [[K, C^T], [C, 0]] [x; lam] = [rhs; closure_rhs] and returns x.

    rhs may hold several columns; one factorization serves all of them.
    """
    n, m = stiffness.shape[0], closure.shape[0]
    system = np.zeros((n + m, n + m))
    system[:n, :n] = stiffness
    system[:n, n:] = closure.T
    system[n:, :n] = closure
    full_rhs = np.concatenate([np.atleast_1d(rhs).reshape(n, -1), np.atleast_1d(closure_rhs).reshape(m, -1)])
    try:
        sol = scipy.linalg.solve(system, full_rhs, assume_a="sym")
    except np.linalg.LinAlgError as exc:
        raise SingularLocalSystemError(f"closed Hessian system is singular ({exc})", element) from None
    if not np.all(np.isfinite(sol)):
        raise SingularLocalSystemError("closed Hessian system produced non-finite values", element)
    x = sol[:n]
    return x[:, 0] if np.ndim(rhs) == 1 else x


def energy_project(basis, material, v, quadrature=None, origin=(0.0, 0.0)):
    """Energy projector onto P^l(T), l = basis.degree >= 2.

    a_T(proj v - v, w) = 0 for all w in P^l(T), and pi^1_T(proj v - v) = 0.
    """
    if basis.degree < 2:
        raise ValueError(f"energy projector needs degree >= 2, got {basis.degree}")
    quad = quadrature or element_quadrature(basis.vertices, 2 * basis.degree + 2)
    v = as_field(v)
    pts = quad.points + np.asarray(origin)
    hess = basis.hessian_voigt(quad.points)
    rhs = np.einsum("q,qis,st,qt->i", quad.weights, hess, material.matrix, v.hessian_voigt(pts))
    phi = basis.values(quad.points)
    closure = (phi[:, :3] * quad.weights[:, None]).T @ phi
    closure_rhs = phi[:, :3].T @ (quad.weights * v.value(pts))
    return solve_closed(hessian_stiffness(basis, material, quad), closure, rhs, closure_rhs)


def sobolev_seminorm(values_by_alpha, weights):
    """Sum over multi-indices of L2 norms, the convention |v|_{H^m} = sum_alpha ||d^alpha v||."""
    return float(sum(np.sqrt(np.dot(weights, vals ** 2)) for vals in values_by_alpha))


PROBE_SHAPES = {
    "triangular": np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
    "cartesian": np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
    "hexagonal": np.array([[math.cos(a), math.sin(a)] for a in np.arange(6) * math.pi / 3]) * 0.5,
}


@dataclass(frozen=True)
class ProbeResult:
    sizes: np.ndarray
    errors: np.ndarray
    normalized: np.ndarray
    slope: float


def approximation_rate_probe(degree, s, m, family="triangular", levels=4, field=None, material=None,
                             base_size=0.5, anchor=(0.3, 0.2)):
    """Observed rate of |v - proj v|_{H^m(T)} / |v|_{H^s(T)} on a shrinking element.

    The element of the given family is scaled by base_size * 2^-i and placed at `anchor`;
    the slope of the log-log least-squares fit against h_T is returned with the raw data.
    """
    if not 2 <= s <= degree + 1 or not 0 <= m <= s:
        raise ValueError(f"need 2 <= s <= l+1 and 0 <= m <= s, got l={degree}, s={s}, m={m}")
    if family not in PROBE_SHAPES:
        raise ValueError(f"unknown probe family '{family}'")
    field = field if field is not None else SeparableField.sine_product(2.0, 3.0, 0.3, 0.1)
    material = material or MaterialTensor.identity()
    sizes, errors, normalized = [], [], []
    for i in range(levels):
        verts = PROBE_SHAPES[family] * (base_size * 0.5 ** i) + np.asarray(anchor)
        quad = element_quadrature(verts, 2 * degree + 6)
        basis = ElementBasis(verts, degree)
        coef = energy_project(basis, material, field, quadrature=quad)
        pts, w = quad.points, quad.weights
        err = sobolev_seminorm(
            [field.derivative(pts, m - j, j) - basis.evaluate(coef, pts, m - j, j) for j in range(m + 1)], w
        )
        ref = sobolev_seminorm([field.derivative(pts, s - j, j) for j in range(s + 1)], w)
        sizes.append(basis.diameter)
        errors.append(err)
        normalized.append(err / ref if ref > 0 else np.nan)
    sizes, errors, normalized = np.array(sizes), np.array(errors), np.array(normalized)
    usable = np.isfinite(normalized) & (normalized > 0)
    slope = float(np.polyfit(np.log(sizes), np.log(normalized), 1)[0]) if usable.all() else float("nan")
    logger.debug("probe l=%d s=%d m=%d %s: slope %.3f", degree, s, m, family, slope)
    return ProbeResult(sizes, errors, normalized, slope)
