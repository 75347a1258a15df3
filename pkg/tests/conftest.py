import math

import numpy as np
import pytest

from hho_plate.fields import SeparableField
from hho_plate.mesh import PolygonalMesh

REF_TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
HEXAGON = np.array([[0.5 * math.cos(a), 0.5 * math.sin(a)] for a in np.arange(6) * math.pi / 3])

SHAPES = {"triangle": REF_TRIANGLE, "square": UNIT_SQUARE, "hexagon": HEXAGON}


def single_element_mesh(vertices):
    return PolygonalMesh(vertices, [list(range(len(vertices)))])


def random_polynomial(rng, degree, scale=1.0):
    """Random polynomial of total degree <= degree as a SeparableField."""
    coef = {(d - j, j): scale * rng.standard_normal() for d in range(degree + 1) for j in range(d + 1)}
    return SeparableField.from_monomials(coef)


def triangle_moment(a, b):
    """Integral of x^a y^b over the reference triangle."""
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture(params=sorted(SHAPES))
def shape(request):
    return SHAPES[request.param]
