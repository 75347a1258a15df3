"""Global unknowns, static condensation, sparse assembly and solve.

Face unknowns are numbered face by face, 3(k+1) per face in the local block layout
[grad_x, grad_y, trace]. Boundary face unknowns are retained in the system with a unit
diagonal and zero right-hand side (clamped conditions u = 0, grad u = 0).
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from hho_plate.errors import AssemblyError, ConfigError, SingularLocalSystemError, SolverError
from hho_plate.fields import as_field
from hho_plate.localop import ElementSpace, LocalOperators, check_degree, load_vector, local_key
from hho_plate.polyspace import MaterialTensor, poly_dim
from hho_plate.utils import worker_count

logger = logging.getLogger(__name__)

SOLVERS = ("direct", "cg")
MAX_REFINEMENTS = 10
REFINE_TARGET = 0.1


@dataclass(frozen=True)
class GlobalDofMap:
    k: int
    n_elements: int
    n_faces: int
    face_block: int
    element_size: int
    boundary_mask: np.ndarray

    @property
    def size(self):
        """Dimension of the condensed (face) system, constrained rows included."""
        return self.face_block * self.n_faces

    @property
    def n_free(self):
        return int((~self.boundary_mask).sum())

    @property
    def n_element_dofs(self):
        return self.element_size * self.n_elements

    def face_dofs(self, f):
        return np.arange(self.face_block * f, self.face_block * (f + 1))

    def element_face_dofs(self, faces):
        return (self.face_block * np.asarray(faces)[:, None] + np.arange(self.face_block)).ravel()

    def element_offset(self, t):
        """Offset of element t's unknowns in the full (face + element) numbering."""
        return self.size + self.element_size * t


def build_dof_map(mesh, k):
    k = check_degree(k)
    block = 3 * (k + 1)
    mask = np.repeat(mesh.boundary, block)
    mask.setflags(write=False)
    return GlobalDofMap(k, mesh.n_elements, mesh.n_faces, block, poly_dim(k), mask)


def material_map(materials):
    """Normalizes None / MaterialTensor / {sid: MaterialTensor or 6 numbers} to a lookup."""
    if materials is None:
        return {}, MaterialTensor.identity()
    if isinstance(materials, MaterialTensor):
        return {}, materials
    table = {}
    for sid, m in dict(materials).items():
        table[int(sid)] = m if isinstance(m, MaterialTensor) else MaterialTensor.from_upper(m)
    return table, MaterialTensor.identity()


@dataclass
class CondensedElement:
    """Condensation data shared by every element with the same local operators."""

    operators: LocalOperators
    factor: tuple
    coupling: np.ndarray
    schur: np.ndarray


def condense(ops, element=None):
    try:
        factor = scipy.linalg.cho_factor(ops.a_tt)
    except np.linalg.LinAlgError:
        raise SingularLocalSystemError("element block A_TT is not positive definite", element) from None
    coupling = scipy.linalg.cho_solve(factor, ops.a_tf)
    schur = ops.a_ff - ops.a_tf.T @ coupling
    return CondensedElement(ops, factor, coupling, 0.5 * (schur + schur.T))


@dataclass
class CondensedSystem:
    mesh: object
    k: int
    eta: float
    dof_map: GlobalDofMap
    matrix: sp.csr_matrix
    rhs: np.ndarray
    pattern_nnz: int
    elements: list
    loads: np.ndarray
    recovery: np.ndarray
    load: object
    materials: list = field(default_factory=list)

    @property
    def size(self):
        return self.dof_map.size

    @property
    def n_free(self):
        return self.dof_map.n_free

    @property
    def n_unique_operators(self):
        return len({id(e) for e in self.elements})

    def operators(self, t):
        return self.elements[t].operators

    def local_face_dofs(self, t):
        return self.dof_map.element_face_dofs(self.mesh.element_faces[t])


def _map(func, items, threads):
    if threads > 0:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(func, items))
    return [func(i) for i in items]


def assemble(mesh, k, materials=None, eta=1.0, load=0.0, threads=None):
    """Element-by-element assembly of the condensed face system."""
    k = check_degree(k)
    if not eta > 0:
        raise ConfigError(f"stabilization parameter eta must be > 0, got {eta}")
    started = time.perf_counter()
    dof_map = build_dof_map(mesh, k)
    table, default = material_map(materials)
    element_materials = [table.get(int(s), default) for s in mesh.subdomains]
    load = as_field(load)
    threads = worker_count(threads)

    keys, first = [], {}
    for t in range(mesh.n_elements):
        key = local_key(mesh, t, k, element_materials[t])
        keys.append(key)
        first.setdefault(key, t)

    def build(t):
        origin = mesh.element_centroid[t]
        space = ElementSpace(mesh.element_vertices(t) - origin, mesh.element_face_signs[t], k, element_materials[t])
        return condense(LocalOperators(space, eta, element=t), element=t)

    unique = dict(zip(first, _map(build, list(first.values()), threads)))
    elements = [unique[key] for key in keys]
    logger.debug("%d elements share %d local operator sets", mesh.n_elements, len(unique))

    def element_load(t):
        space = elements[t].operators.space
        return load_vector(space, load, mesh.element_centroid[t])

    loads = np.array(_map(element_load, range(mesh.n_elements), threads)).reshape(mesh.n_elements, -1)

    n = dof_map.size
    rows, cols, data = [], [], []
    rhs = np.zeros(n)
    recovery = np.empty_like(loads)
    for t, ce in enumerate(elements):
        dofs = dof_map.element_face_dofs(mesh.element_faces[t])
        xb = scipy.linalg.cho_solve(ce.factor, loads[t])
        recovery[t] = xb
        np.add.at(rhs, dofs, -ce.operators.a_tf.T @ xb)
        rows.append(np.repeat(dofs, len(dofs)))
        cols.append(np.tile(dofs, len(dofs)))
        data.append(ce.schur.ravel())
    matrix = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    matrix.sum_duplicates()
    pattern_nnz = int(matrix.nnz)
    if not np.all(np.isfinite(matrix.data)) or not np.all(np.isfinite(rhs)):
        raise AssemblyError("non-finite entries in the condensed system")

    fixed = dof_map.boundary_mask
    keep = sp.diags((~fixed).astype(float))
    matrix = (keep @ matrix @ keep + sp.diags(fixed.astype(float))).tocsr()
    rhs[fixed] = 0.0
    logger.debug(
        "assembled k=%d: %d face unknowns (%d free), nnz %d in %.2fs",
        k, n, dof_map.n_free, pattern_nnz, time.perf_counter() - started,
    )
    return CondensedSystem(
        mesh=mesh,
        k=k,
        eta=float(eta),
        dof_map=dof_map,
        matrix=matrix,
        rhs=rhs,
        pattern_nnz=pattern_nnz,
        elements=elements,
        loads=loads,
        recovery=recovery,
        load=load,
        materials=element_materials,
    )


@dataclass
class DiscreteSolution:
    system: CondensedSystem
    faces: np.ndarray
    elements: np.ndarray
    residual: float
    method: str

    def local_dofs(self, t):
        """Local unknown vector of element t in the local layout."""
        return np.concatenate([self.elements[t], self.faces[self.system.local_face_dofs(t)]])

    def energy(self):
        """a_h(u_h, u_h)"""
        return float(sum(self.system.operators(t).energy(self.local_dofs(t)) for t in range(self.system.mesh.n_elements)))

    def load_work(self):
        """(f, u_h)"""
        return float(np.sum(self.system.loads * self.elements))


def recover_elements(system, faces):
    """u_T = A_TT^-1 (b_T - A_TF u_F) for every element."""
    out = np.empty_like(system.loads)
    for t, ce in enumerate(system.elements):
        out[t] = system.recovery[t] - ce.coupling @ faces[system.local_face_dofs(t)]
    return out


def _relative_residual(matrix, x, b):
    scale = np.linalg.norm(b)
    r = np.linalg.norm(b - matrix @ x)
    return r / scale if scale > 0 else r


def jacobi_scaling(matrix):
    """D^-1/2 of the (SPD) condensed matrix."""
    d = matrix.diagonal()
    if not np.all(np.isfinite(d)) or np.any(d <= 0.0):
        raise SolverError("condensed matrix has a non-positive diagonal entry", {"min_diag": f"{d.min():.3e}"})
    return 1.0 / np.sqrt(d)


def _solve_direct(a, b, tol):
    """LU of D^-1/2 A D^-1/2, then iterative refinement on the unscaled residual."""
    s = jacobi_scaling(a)
    scale = sp.diags(s)
    try:
        lu = spla.splu((scale @ a @ scale).tocsc())
    except RuntimeError as exc:
        raise SolverError("sparse factorization failed", {"size": len(b), "reason": str(exc)}) from None
    x = s * lu.solve(s * b)
    res = _relative_residual(a, x, b)
    steps = 0
    while res > REFINE_TARGET * tol and steps < MAX_REFINEMENTS:
        candidate = x + s * lu.solve(s * (b - a @ x))
        new = _relative_residual(a, candidate, b)
        if not new < res:
            break
        x, res = candidate, new
        steps += 1
    logger.debug("direct solve: %d refinement steps, residual %.2e", steps, res)
    return x


def _solve_cg(a, b, tol):
    """Jacobi-preconditioned cg, restarted from the current iterate when the true residual lags."""
    s = jacobi_scaling(a)
    precond = sp.diags(s * s)
    x = np.zeros_like(b)
    for _ in range(MAX_REFINEMENTS):
        x, info = spla.cg(a, b, x0=x, rtol=REFINE_TARGET * tol, atol=0.0, maxiter=20 * len(b), M=precond)
        if info != 0:
            raise SolverError("conjugate gradient did not converge", {"info": info, "size": len(b)})
        if _relative_residual(a, x, b) <= tol:
            break
    return x


def solve(system, method="direct", tol=1e-10):
    if method not in SOLVERS:
        raise ConfigError(f"unknown solver '{method}', expected one of {', '.join(SOLVERS)}")
    started = time.perf_counter()
    a, b = system.matrix, system.rhs
    if not np.any(b):
        x = np.zeros_like(b)
    elif method == "direct":
        x = _solve_direct(a, b, tol)
    else:
        x = _solve_cg(a, b, tol)
    res = _relative_residual(a, x, b)
    if not np.isfinite(res) or res > max(tol, 1e-10):
        raise SolverError("condensed system residual above tolerance", {"residual": f"{res:.3e}", "tol": tol})
    logger.debug("%s solve: %d unknowns, residual %.2e, %.2fs", method, system.size, res, time.perf_counter() - started)
    return DiscreteSolution(system, x, recover_elements(system, x), float(res), method)


def assemble_full(system):
    """Uncondensed hybrid system over [face unknowns, element unknowns], same boundary treatment."""
    dof_map, mesh = system.dof_map, system.mesh
    n = dof_map.size + dof_map.n_element_dofs
    rows, cols, data = [], [], []
    rhs = np.zeros(n)
    for t, ce in enumerate(system.elements):
        dofs = np.concatenate([dof_map.element_offset(t) + np.arange(dof_map.element_size), system.local_face_dofs(t)])
        rows.append(np.repeat(dofs, len(dofs)))
        cols.append(np.tile(dofs, len(dofs)))
        data.append(ce.operators.matrix.ravel())
        rhs[dofs[: dof_map.element_size]] += system.loads[t]
    full = sp.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
    fixed = np.zeros(n, dtype=bool)
    fixed[: dof_map.size] = dof_map.boundary_mask
    keep = sp.diags((~fixed).astype(float))
    full = (keep @ full @ keep + sp.diags(fixed.astype(float))).tocsr()
    rhs[fixed] = 0.0
    return full, rhs


def full_residual(solution):
    """Relative residual of the uncondensed system at the recovered solution."""
    full, rhs = assemble_full(solution.system)
    x = np.concatenate([solution.faces, solution.elements.ravel()])
    return float(_relative_residual(full, x, rhs))


def export_matrix(system, path):
    """Writes the condensed matrix in Matrix Market symmetric coordinate format."""
    path = Path(path)
    if path.suffix != ".mtx":
        path = path.with_name(path.name + ".mtx")
    scipy.io.mmwrite(str(path), sp.coo_matrix(system.matrix), comment=f"condensed HHO plate system, k={system.k}",
                     field="real", symmetry="symmetric")
    return path


def dump_local_operators(system, path):
    """Text dump: per element an 'element t' header, then P, S and A_loc row-major."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for t in range(system.mesh.n_elements):
            ops = system.operators(t)
            fh.write(f"element {t}\n")
            for name, mat in (("P", ops.reconstruction), ("S", ops.stabilization), ("A", ops.matrix)):
                fh.write(f"{name} {mat.shape[0]} {mat.shape[1]}\n")
                np.savetxt(fh, mat, fmt="%.16e")
    return path
