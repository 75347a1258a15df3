"""Test problems: exact deflections with closed-form loads, and the load-only L-shape and mesh-file cases."""
from dataclasses import dataclass, field

from hho_plate.errors import ConfigError
from hho_plate.fields import CombinationField, DerivativeField, SeparableField
from hho_plate.generators import generate_lshape_triangular, generate_unit_square, uniform_refine
from hho_plate.mesh import read_mesh
from hho_plate.polyspace import SQRT2, MaterialTensor

# p(t) = t^2 (1 - t)^2 and its second derivative
BUMP = [0.0, 0.0, 1.0, -2.0, 1.0]
BUMP_DD = [2.0, -12.0, 12.0]
ONE = [1.0]

SQUARE_EXACT_ENERGY = -2.0 / 1225.0
LSHAPE_ENERGY_LIMIT = -2.80e-05
LSHAPE_ENERGY_BAND = (-2.83e-05, -2.79e-05)

ORTHOTROPIC = MaterialTensor.from_upper([2.0, 0.3, 0.0, 1.0, 0.0, 0.6])


@dataclass
class ManufacturedCase:
    name: str
    domain: str
    load: object
    exact: object = None
    material: MaterialTensor = field(default_factory=MaterialTensor.identity)
    reference_energy: float = None

    @property
    def has_exact(self):
        return self.exact is not None


def plate_load(u, material):
    """f = div div (A hess u) for a smooth field u."""
    v = material.matrix
    d = lambda a, b: DerivativeField(u, a, b)  # noqa: E731
    return CombinationField(
        [
            (v[0, 0], d(4, 0)),
            (v[1, 1], d(0, 4)),
            (v[0, 1] + v[1, 0] + 2.0 * v[2, 2], d(2, 2)),
            (SQRT2 * (v[0, 2] + v[2, 0]), d(3, 1)),
            (SQRT2 * (v[1, 2] + v[2, 1]), d(1, 3)),
        ]
    )


def bump_deflection():
    return SeparableField.product(BUMP, BUMP)


def builtin_square_case():
    """u = p(x) p(y) on the unit square; f = 24 p(y) + 2 p''(x) p''(y) + 24 p(x)."""
    load = SeparableField.product(ONE, BUMP, 24.0) + SeparableField.product(BUMP_DD, BUMP_DD, 2.0)
    load = load + SeparableField.product(BUMP, ONE, 24.0)
    return ManufacturedCase(
        "square_manufactured", "square", load, bump_deflection(), reference_energy=SQUARE_EXACT_ENERGY
    )


def square_orthotropic_case(material=ORTHOTROPIC):
    u = bump_deflection()
    return ManufacturedCase("square_orthotropic", "square", plate_load(u, material), u, material)


def lshape_uniform_case():
    return ManufacturedCase(
        "lshape_uniform", "lshape", SeparableField.constant(1.0), reference_energy=LSHAPE_ENERGY_LIMIT
    )


def custom_mesh_case():
    return ManufacturedCase("custom_mesh_file", "file", SeparableField.constant(1.0))


PROBLEMS = {
    "square_manufactured": builtin_square_case,
    "square_orthotropic": square_orthotropic_case,
    "lshape_uniform": lshape_uniform_case,
    "custom_mesh_file": custom_mesh_case,
}


# study settings a problem runs with unless the config file or a flag says otherwise
PROBLEM_DEFAULTS = {
    "lshape_uniform": {
        "k": 2,
        "levels": 5,
        "energy_min": LSHAPE_ENERGY_BAND[0],
        "energy_max": LSHAPE_ENERGY_BAND[1],
    },
}


def problem_name(name):
    key = str(name).strip().replace("-", "_")
    if key not in PROBLEMS:
        raise ConfigError(f"unknown problem '{name}', expected one of {', '.join(PROBLEMS)}")
    return key


def problem_defaults(name):
    return dict(PROBLEM_DEFAULTS.get(problem_name(name), {}))


def get_problem(name):
    return PROBLEMS[problem_name(name)]()


def level_mesh(case, family, level, mesh_path=None, previous=None):
    """Mesh of a refinement level: n = 2^level for built-in domains, uniform refinement for files."""
    if case.domain == "square":
        return generate_unit_square(family, 2 ** level)
    if case.domain == "lshape":
        return generate_lshape_triangular(2 ** level)
    if previous is not None:
        return uniform_refine(previous)
    if mesh_path is None:
        raise ConfigError("problem custom_mesh_file needs --mesh <path>")
    mesh = read_mesh(mesh_path)
    for _ in range(level - 1):
        mesh = uniform_refine(mesh)
    return mesh
