"""Error measures, discrete energy, jump seminorm, equilibrium diagnostics and convergence orders."""
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from hho_plate.assembly import DiscreteSolution
from hho_plate.fields import as_field
from hho_plate.localop import face_fluxes, hessian_norm, interpolate, virtual_work_residual

logger = logging.getLogger(__name__)

ENERGY_RTOL = 1e-9
SCALE_FLOOR = 1e-14
CSV_COLUMNS = [
    "level", "h", "n_elem", "n_face", "n_dof_condensed", "nnz",
    "err_energy", "eoc_energy", "err_l2", "eoc_l2", "err_rec_l2", "jump_seminorm", "energy", "eta",
]


def discrete_energy(solution):
    """E(u_h) = 1/2 a_h(u_h, u_h) - (f, u_h), cross-checked against -1/2 a_h(u_h, u_h)."""
    a = solution.energy()
    work = solution.load_work()
    energy = 0.5 * a - work
    identity = -0.5 * a
    if abs(energy - identity) > ENERGY_RTOL * abs(identity) + 1e-300:
        logger.warning("energy identity mismatch: E=%.12e, -a/2=%.12e", energy, identity)
    return energy


def interpolated_solution(system, u, clamp=True):
    """Global interpolate of u as a DiscreteSolution; clamp zeroes the boundary face unknowns."""
    u = as_field(u)
    mesh = system.mesh
    faces = np.zeros(system.size)
    elements = np.empty_like(system.loads)
    for t in range(mesh.n_elements):
        space = system.operators(t).space
        local = interpolate(space, u, mesh.element_centroid[t]).to_array()
        elements[t] = local[: space.nk]
        faces[system.local_face_dofs(t)] = local[space.nk :]
    if clamp:
        faces[system.dof_map.boundary_mask] = 0.0
    return DiscreteSolution(system, faces, elements, float("nan"), "interpolate")


def error_energy_norm(solution, u, interpolant=None):
    """||I_h u - u_h||_{a,h} through the local forms."""
    iu = interpolant or interpolated_solution(solution.system, u)
    total = 0.0
    for t in range(solution.system.mesh.n_elements):
        e = iu.local_dofs(t) - solution.local_dofs(t)
        total += solution.system.operators(t).energy(e)
    return math.sqrt(max(total, 0.0))


def hybrid_seminorm(solution):
    """||u_h||_{A,h} from the local seminorm matrices."""
    total = 0.0
    for t in range(solution.system.mesh.n_elements):
        d = solution.local_dofs(t)
        total += float(d @ solution.system.operators(t).seminorm @ d)
    return math.sqrt(max(total, 0.0))


def stabilization_seminorm(solution):
    """(sum_T s_T(u_T, u_T))^1/2, without the eta factor."""
    total = 0.0
    for t in range(solution.system.mesh.n_elements):
        d = solution.local_dofs(t)
        total += float(d @ solution.system.operators(t).stabilization @ d)
    return math.sqrt(max(total, 0.0))


def error_l2(solution, u, interpolant=None):
    """||pi_h^k u - u_h|| over element unknowns (orthonormal element bases)."""
    iu = interpolant or interpolated_solution(solution.system, u)
    return float(np.linalg.norm(iu.elements - solution.elements))


def face_error(solution, u, interpolant=None):
    """Face trace unknowns against pi_F^k u, summed over faces."""
    iu = interpolant or interpolated_solution(solution.system, u)
    nf = solution.system.k + 1
    diff = (iu.faces - solution.faces).reshape(-1, 3, nf)[:, 2]
    return float(np.linalg.norm(diff))


def reconstruction_l2_error(solution, u):
    """||p_h u_h - u||"""
    u = as_field(u)
    system = solution.system
    total = 0.0
    for t in range(system.mesh.n_elements):
        ops = system.operators(t)
        lq = ops.space.load_quadrature
        p = ops.reconstruction @ solution.local_dofs(t)
        diff = ops.space.load_basis @ p - u.value(lq.points + system.mesh.element_centroid[t])
        total += float(np.dot(lq.weights, diff ** 2))
    return math.sqrt(total)


def _face_projections(solution):
    """Per (element, local face): (t, f, face tables, grad projections (2, nf), trace projection (nf,))."""
    system = solution.system
    mesh = system.mesh
    for t in range(mesh.n_elements):
        ops = system.operators(t)
        p = ops.reconstruction @ solution.local_dofs(t)
        for j, face in enumerate(ops.space.faces):
            grad = np.stack([face.project(face.grad[0] @ p), face.project(face.grad[1] @ p)])
            yield t, int(mesh.element_faces[t][j]), face, grad, face.project(face.trace @ p)


def jump_seminorm(solution, include_boundary=True):
    """|p_h u_h|_{J,h}: projected jumps of p_h u_h and its gradient; one-sided on boundary faces."""
    system = solution.system
    mesh = system.mesh
    nf = system.k + 1
    grad_jump = np.zeros((mesh.n_faces, 2, nf))
    trace_jump = np.zeros((mesh.n_faces, nf))
    a_face = np.full(mesh.n_faces, np.inf)
    masses = [None] * mesh.n_faces
    for t, f, face, grad, trace in _face_projections(solution):
        side = 1.0 if mesh.face_elements[f, 0] == t else -1.0
        grad_jump[f] += side * grad
        trace_jump[f] += side * trace
        a_face[f] = min(a_face[f], system.materials[t].upper)
        masses[f] = face.mass
    total = 0.0
    faces = range(mesh.n_faces) if include_boundary else mesh.interior_faces
    for f in faces:
        h = mesh.face_length[f]
        m = masses[f]
        g = sum(float(grad_jump[f, c] @ m @ grad_jump[f, c]) for c in (0, 1))
        total += a_face[f] / h * g + a_face[f] / h ** 3 * float(trace_jump[f] @ m @ trace_jump[f])
    return math.sqrt(max(total, 0.0))


@dataclass
class FluxReport:
    interfaces: np.ndarray
    moment_mismatch: np.ndarray
    shear_mismatch: np.ndarray
    virtual_work: np.ndarray
    element_scale: np.ndarray

    @property
    def max_moment(self):
        return float(self.moment_mismatch.max(initial=0.0))

    @property
    def max_shear(self):
        return float(self.shear_mismatch.max(initial=0.0))

    @property
    def max_virtual_work(self):
        return float(self.virtual_work.max(initial=0.0))

    @property
    def max_residual(self):
        return max(self.max_moment, self.max_shear, self.max_virtual_work)

    def to_frame(self):
        return pd.DataFrame(
            {"face": self.interfaces, "moment_mismatch": self.moment_mismatch, "shear_mismatch": self.shear_mismatch}
        )


def flux_report(solution):
    """Action-reaction mismatches per interface and virtual-work residuals per element.

    Both are normalized by the local scale A+_T h_T^-1 ||hess p_T u_T||_T (floored at 1e-14).
    """
    system = solution.system
    mesh = system.mesh
    scales = np.empty(mesh.n_elements)
    virtual = np.empty(mesh.n_elements)
    fluxes = {}
    for t in range(mesh.n_elements):
        ops = system.operators(t)
        dofs = solution.local_dofs(t)
        p = ops.reconstruction @ dofs
        scales[t] = max(ops.space.material.upper / ops.space.diameter * hessian_norm(ops.space, p), SCALE_FLOOR)
        moments, shears = face_fluxes(ops, dofs)
        for j, f in enumerate(mesh.element_faces[t]):
            fluxes[(t, int(f))] = (moments[j], shears[j], ops.space.faces[j].mass)
        virtual[t] = np.abs(virtual_work_residual(ops, dofs, system.loads[t])).max() / scales[t]

    interfaces = mesh.interior_faces
    moment_mm = np.empty(len(interfaces))
    shear_mm = np.empty(len(interfaces))
    for i, f in enumerate(interfaces):
        t1, t2 = mesh.face_elements[f]
        m1, s1, mass = fluxes[(t1, f)]
        m2, s2, _ = fluxes[(t2, f)]
        dm, ds = m1 + m2, s1 + s2
        scale = max(scales[t1], scales[t2])
        moment_mm[i] = math.sqrt(max(sum(float(dm[c] @ mass @ dm[c]) for c in (0, 1)), 0.0)) / scale
        shear_mm[i] = math.sqrt(max(float(ds @ mass @ ds), 0.0)) / scale
    report = FluxReport(interfaces, moment_mm, shear_mm, virtual, scales)
    logger.debug(
        "flux report: moment %.2e, shear %.2e, virtual work %.2e",
        report.max_moment, report.max_shear, report.max_virtual_work,
    )
    return report


def eoc(errors):
    """Slopes log(e_{i-1}/e_i) / log(h_{i-1}/h_i); NaN where an error is zero (exact)."""
    pairs = [(float(h), float(e)) for h, e in errors]
    slopes = []
    for (h0, e0), (h1, e1) in zip(pairs, pairs[1:]):
        if e0 <= 0.0 or e1 <= 0.0 or h0 == h1:
            slopes.append(float("nan"))
        else:
            slopes.append(math.log(e0 / e1) / math.log(h0 / h1))
    return slopes


@dataclass
class ErrorReport:
    level: int
    h: float
    n_elem: int
    n_face: int
    n_dof_condensed: int
    nnz: int
    err_energy: float
    err_l2: float
    err_rec_l2: float
    err_face: float
    jump_seminorm: float
    energy: float
    eta: float
    eoc_energy: float = float("nan")
    eoc_l2: float = float("nan")

    def as_row(self):
        values = asdict(self)
        return {c: values[c] for c in CSV_COLUMNS}


def error_report(solution, exact=None, level=0):
    system = solution.system
    mesh = system.mesh
    nan = float("nan")
    if exact is not None:
        iu = interpolated_solution(system, exact)
        errs = (
            error_energy_norm(solution, exact, iu),
            error_l2(solution, exact, iu),
            reconstruction_l2_error(solution, exact),
            face_error(solution, exact, iu),
        )
    else:
        errs = (nan, nan, nan, nan)
    return ErrorReport(
        level=int(level),
        h=mesh.meshsize,
        n_elem=mesh.n_elements,
        n_face=mesh.n_faces,
        n_dof_condensed=system.size,
        nnz=system.pattern_nnz,
        err_energy=errs[0],
        err_l2=errs[1],
        err_rec_l2=errs[2],
        err_face=errs[3],
        jump_seminorm=jump_seminorm(solution),
        energy=discrete_energy(solution),
        eta=system.eta,
    )
