"""Quadrature on segments, triangles and polygons.

Triangles use a collapsed (conical product) rule: Gauss-Legendre in one direction and
Gauss-Jacobi with weight (1 - v) in the collapsed one. Weights are positive and the rule is
exact for total degree up to the requested exactness. Polygons are split into a fan of
triangles around their centroid.
"""
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre
from scipy.special import roots_jacobi

from hho_plate.mesh import polygon_centroid


@dataclass(frozen=True)
class Quadrature:
    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)

    @property
    def measure(self):
        return float(self.weights.sum())

    def integrate(self, values):
        """Integrates sampled values of shape (n_points, ...) over the domain."""
        return np.tensordot(self.weights, values, axes=(0, 0))

    def shifted(self, origin):
        return Quadrature(self.points + np.asarray(origin), self.weights, self.degree)


@lru_cache(maxsize=None)
def _reference_triangle_rule(degree):
    n = degree // 2 + 1
    u, wu = legendre.leggauss(n)
    v, wv = roots_jacobi(n, 1.0, 0.0)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    x = (1.0 + uu) * (1.0 - vv) / 4.0
    y = (1.0 + vv) / 2.0
    w = np.outer(wu, wv) / 8.0
    return np.column_stack([x.ravel(), y.ravel()]), w.ravel()


def triangle_quadrature(p0, p1, p2, degree):
    ref_pts, ref_w = _reference_triangle_rule(int(degree))
    p0, p1, p2 = (np.asarray(p, dtype=float) for p in (p0, p1, p2))
    jac = np.column_stack([p1 - p0, p2 - p0])
    det = abs(np.linalg.det(jac))
    return Quadrature(p0 + ref_pts @ jac.T, ref_w * det, int(degree))


def element_quadrature(vertices, degree):
    """Quadrature on a convex (or centroid star-shaped) polygon, exact up to `degree`."""
    vertices = np.asarray(vertices, dtype=float)
    if degree < 0:
        raise ValueError(f"quadrature exactness must be >= 0, got {degree}")
    if len(vertices) == 3:
        return triangle_quadrature(*vertices, degree)
    c = polygon_centroid(vertices)
    parts = [
        triangle_quadrature(c, vertices[j], vertices[(j + 1) % len(vertices)], degree)
        for j in range(len(vertices))
    ]
    return Quadrature(
        np.vstack([q.points for q in parts]), np.concatenate([q.weights for q in parts]), int(degree)
    )


def face_point_count(k):
    return math.ceil((2 * k + 5) / 2) + 1


@lru_cache(maxsize=None)
def _gauss_legendre(n):
    return legendre.leggauss(n)


def face_quadrature(a, b, n_points):
    """Gauss-Legendre rule on segment [a, b]; also returns the reference abscissae in [-1, 1]."""
    s, w = _gauss_legendre(int(n_points))
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    length = float(np.linalg.norm(b - a))
    points = 0.5 * (a + b) + 0.5 * s[:, None] * (b - a)
    return Quadrature(points, 0.5 * length * w, 2 * int(n_points) - 1), s
