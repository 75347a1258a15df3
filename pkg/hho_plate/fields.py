"""Smooth scalar fields with exact partial derivatives of any order.

Every field answers derivative(points, a, b) = d^a/dx^a d^b/dy^b v at points of shape (n, 2).
Separable sums cover everything the studies need: polynomials, products of 1D polynomials
(manufactured deflections) and sine products (approximation probes).
"""
import math

import numpy as np
from numpy.polynomial import Polynomial

SQRT2 = math.sqrt(2.0)


class PolynomialFactor:
    def __init__(self, coef):
        self.poly = coef if isinstance(coef, Polynomial) else Polynomial(coef)

    def derivative(self, t, n=0):
        return self.poly.deriv(n)(t) if n else self.poly(t)


class SineFactor:
    """sin(omega * t + phase)"""

    def __init__(self, omega, phase=0.0):
        self.omega = float(omega)
        self.phase = float(phase)

    def derivative(self, t, n=0):
        return self.omega ** n * np.sin(self.omega * t + self.phase + n * math.pi / 2)


class Field:
    def derivative(self, points, a=0, b=0):
        raise NotImplementedError

    def value(self, points):
        return self.derivative(points, 0, 0)

    def __call__(self, points):
        return self.value(points)

    def gradient(self, points):
        return np.stack([self.derivative(points, 1, 0), self.derivative(points, 0, 1)], axis=-1)

    def hessian_voigt(self, points):
        """(v_xx, v_yy, sqrt(2) v_xy) at each point."""
        return np.stack(
            [self.derivative(points, 2, 0), self.derivative(points, 0, 2), SQRT2 * self.derivative(points, 1, 1)],
            axis=-1,
        )


class SeparableField(Field):
    """v(x, y) = sum_r c_r X_r(x) Y_r(y)"""

    def __init__(self, terms):
        self.terms = [(float(c), fx, fy) for c, fx, fy in terms]

    def derivative(self, points, a=0, b=0):
        points = np.asarray(points, dtype=float)
        x, y = points[..., 0], points[..., 1]
        out = np.zeros(x.shape)
        for c, fx, fy in self.terms:
            out = out + c * fx.derivative(x, a) * fy.derivative(y, b)
        return out

    def __add__(self, other):
        return SeparableField(self.terms + other.terms)

    def __mul__(self, scalar):
        return SeparableField([(c * scalar, fx, fy) for c, fx, fy in self.terms])

    __rmul__ = __mul__

    @classmethod
    def constant(cls, c):
        return cls([(c, PolynomialFactor([1.0]), PolynomialFactor([1.0]))])

    @classmethod
    def from_monomials(cls, coefficients):
        """{(p, q): c} -> sum c x^p y^q"""
        terms = []
        for (p, q), c in coefficients.items():
            terms.append((c, PolynomialFactor([0.0] * p + [1.0]), PolynomialFactor([0.0] * q + [1.0])))
        return cls(terms)

    @classmethod
    def product(cls, px, py, c=1.0):
        return cls([(c, PolynomialFactor(px), PolynomialFactor(py))])

    @classmethod
    def sine_product(cls, wx, wy, phase_x=0.0, phase_y=0.0):
        return cls([(1.0, SineFactor(wx, phase_x), SineFactor(wy, phase_y))])


class DerivativeField(Field):
    """d^a/dx^a d^b/dy^b of another field."""

    def __init__(self, field, a, b):
        self.field = field
        self.a = int(a)
        self.b = int(b)

    def derivative(self, points, a=0, b=0):
        return self.field.derivative(points, self.a + a, self.b + b)


class CombinationField(Field):
    """sum_r c_r v_r"""

    def __init__(self, terms):
        self.terms = [(float(c), f) for c, f in terms if c != 0.0]

    def derivative(self, points, a=0, b=0):
        points = np.asarray(points, dtype=float)
        out = np.zeros(points.shape[:-1])
        for c, f in self.terms:
            out = out + c * f.derivative(points, a, b)
        return out


class CallableField(Field):
    """Wraps f(x, y) -> values; only point values are available."""

    def __init__(self, func):
        self.func = func

    def derivative(self, points, a=0, b=0):
        if a or b:
            raise ValueError("CallableField only provides values, not derivatives")
        points = np.asarray(points, dtype=float)
        return np.broadcast_to(np.asarray(self.func(points[..., 0], points[..., 1]), dtype=float), points.shape[:-1])


def as_field(f):
    if isinstance(f, Field):
        return f
    if np.isscalar(f):
        return SeparableField.constant(float(f))
    if callable(f):
        return CallableField(f)
    raise TypeError(f"cannot use {type(f).__name__} as a field")
