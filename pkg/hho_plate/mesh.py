"""Polygonal meshes: connectivity, geometry, regularity diagnostics and the text file format.

Faces are derived from element connectivity. Each face stores one direction, the one in
which its lowest-indexed incident element traverses it, and the unit normal pointing out of
that element; the other element sees the same face reversed (sign -1).
"""
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hho_plate.errors import MeshConnectivityError, MeshError, MeshFormatError

logger = logging.getLogger(__name__)

AREA_TOL = 1e-14


def signed_area(points):
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(points):
    x, y = points[:, 0], points[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return np.array([cx, cy])


def polygon_diameter(points):
    diff = points[:, None, :] - points[None, :, :]
    return float(np.sqrt((diff ** 2).sum(axis=-1)).max())


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class PolygonalMesh:
    """Immutable polygonal mesh of a 2D domain.

    vertices: (nv, 2) coordinates. elements: counterclockwise vertex index lists.
    subdomains: one integer id per element, selecting the material tensor.
    With strict=True a clockwise element is rejected, otherwise it is reversed.
    """

    def __init__(self, vertices, elements, subdomains=None, strict=True):
        self.vertices = _readonly(np.asarray(vertices, dtype=float).reshape(-1, 2))
        nv = len(self.vertices)
        elems = []
        for t, e in enumerate(elements):
            e = [int(i) for i in e]
            if len(e) < 3:
                raise MeshError(f"element {t} has {len(e)} vertices, need at least 3")
            if min(e) < 0 or max(e) >= nv:
                raise MeshError(f"element {t} references a vertex outside 0..{nv - 1}")
            if len(set(e)) != len(e):
                raise MeshError(f"element {t} repeats a vertex")
            area = signed_area(self.vertices[e])
            if abs(area) <= AREA_TOL:
                raise MeshError(f"element {t} has zero area")
            if area < 0:
                if strict:
                    raise MeshError(f"element {t} is clockwise")
                logger.debug("element %d reversed to counterclockwise", t)
                e = e[::-1]
            elems.append(tuple(e))
        if not elems:
            raise MeshError("mesh has no elements")
        self.elements = tuple(elems)
        if subdomains is None:
            subdomains = np.zeros(len(elems), dtype=int)
        subdomains = np.asarray(subdomains, dtype=int)
        if subdomains.shape != (len(elems),):
            raise MeshError("one subdomain id per element is required")
        self.subdomains = _readonly(subdomains)
        self._build_faces()
        self._build_geometry()

    def _build_faces(self):
        lookup = {}
        faces, incidence = [], []
        element_faces, element_signs = [], []
        for t, e in enumerate(self.elements):
            fids, signs = [], []
            m = len(e)
            for j in range(m):
                a, b = e[j], e[(j + 1) % m]
                key = (a, b) if a < b else (b, a)
                f = lookup.get(key)
                if f is None:
                    f = len(faces)
                    lookup[key] = f
                    faces.append((a, b))
                    incidence.append([t, -1])
                    sign = 1
                else:
                    if incidence[f][0] == t:
                        raise MeshConnectivityError(f"element {t} uses face {key} twice")
                    if incidence[f][1] != -1:
                        raise MeshConnectivityError(
                            f"face {key} is shared by more than two elements "
                            f"({incidence[f][0]}, {incidence[f][1]}, {t})"
                        )
                    if faces[f] == (a, b):
                        raise MeshConnectivityError(
                            f"elements {incidence[f][0]} and {t} traverse face {key} in the "
                            "same direction (overlapping elements)"
                        )
                    incidence[f][1] = t
                    sign = -1
                fids.append(f)
                signs.append(sign)
            element_faces.append(_readonly(np.array(fids, dtype=int)))
            element_signs.append(_readonly(np.array(signs, dtype=float)))
        self.faces = _readonly(np.array(faces, dtype=int))
        self.face_elements = _readonly(np.array(incidence, dtype=int))
        self.element_faces = tuple(element_faces)
        self.element_face_signs = tuple(element_signs)
        self.boundary = _readonly(self.face_elements[:, 1] == -1)

    def _build_geometry(self):
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        d = b - a
        length = np.sqrt((d ** 2).sum(axis=1))
        if np.any(length <= 1e-14):
            bad = int(np.argmin(length))
            raise MeshError(f"face {bad} has zero length")
        tangent = d / length[:, None]
        self.face_length = _readonly(length)
        self.face_midpoint = _readonly(0.5 * (a + b))
        self.face_tangent = _readonly(tangent)
        self.face_normal = _readonly(np.column_stack([tangent[:, 1], -tangent[:, 0]]))

        areas, centroids, diameters = [], [], []
        for e in self.elements:
            pts = self.vertices[list(e)]
            areas.append(signed_area(pts))
            centroids.append(polygon_centroid(pts))
            diameters.append(polygon_diameter(pts))
        self.element_area = _readonly(np.array(areas))
        self.element_centroid = _readonly(np.array(centroids))
        self.element_diameter = _readonly(np.array(diameters))

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def interior_faces(self):
        return np.flatnonzero(~self.boundary)

    @property
    def boundary_faces(self):
        return np.flatnonzero(self.boundary)

    @property
    def meshsize(self):
        return float(self.element_diameter.max())

    @property
    def total_area(self):
        return float(self.element_area.sum())

    def element_vertices(self, t):
        return self.vertices[list(self.elements[t])]

    def outward_normals(self, t):
        """Outward unit normals n_TF of element t, in the element's face order."""
        return self.face_normal[self.element_faces[t]] * self.element_face_signs[t][:, None]

    def is_triangular(self):
        return all(len(e) == 3 for e in self.elements)

    def __repr__(self):
        return (
            f"PolygonalMesh(elements={self.n_elements}, faces={self.n_faces}, "
            f"interior={len(self.interior_faces)}, h={self.meshsize:.4g})"
        )


@dataclass(frozen=True)
class MeshStats:
    n_elements: int
    n_faces: int
    n_interior_faces: int
    n_boundary_faces: int
    meshsize: float
    regularity: float


def _triangle_shape_ratios(p0, p1, p2):
    edges = np.array([np.linalg.norm(p1 - p0), np.linalg.norm(p2 - p1), np.linalg.norm(p0 - p2)])
    area = 0.5 * abs((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
    inradius = 2.0 * area / edges.sum()
    h_s = edges.max()
    return inradius / h_s, h_s


def element_regularity(mesh, t):
    """Shape ratio of element t from its centroid fan (the triangle itself for triangles)."""
    pts = mesh.element_vertices(t)
    h_t = mesh.element_diameter[t]
    if len(pts) == 3:
        sub = [(pts[0], pts[1], pts[2])]
    else:
        c = mesh.element_centroid[t]
        sub = [(c, pts[j], pts[(j + 1) % len(pts)]) for j in range(len(pts))]
    rho = 1.0
    for tri in sub:
        ratio, h_s = _triangle_shape_ratios(*tri)
        rho = min(rho, ratio, h_s / h_t)
    return rho


def mesh_stats(mesh):
    rho = min(element_regularity(mesh, t) for t in range(mesh.n_elements))
    n_int = len(mesh.interior_faces)
    return MeshStats(
        n_elements=mesh.n_elements,
        n_faces=mesh.n_faces,
        n_interior_faces=n_int,
        n_boundary_faces=mesh.n_faces - n_int,
        meshsize=mesh.meshsize,
        regularity=float(rho),
    )


def read_mesh(path, strict=False):
    """Reads the whitespace-separated text format written by write_mesh."""
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise MeshFormatError("file not found", path=path) from None
    lines = [(i + 1, ln.split()) for i, ln in enumerate(raw) if ln.strip()]
    if not lines:
        raise MeshFormatError("empty file", path=path)

    def ints(lineno, fields, what):
        try:
            return [int(v) for v in fields]
        except ValueError:
            raise MeshFormatError(f"expected integers for {what}", path, lineno) from None

    lineno, head = lines[0]
    if len(head) != 2:
        raise MeshFormatError("header must be 'nv ne'", path, lineno)
    nv, ne = ints(lineno, head, "header")
    if nv < 3 or ne < 1:
        raise MeshFormatError("need at least 3 vertices and 1 element", path, lineno)
    if len(lines) < 1 + nv + ne:
        raise MeshFormatError(
            f"expected {nv} vertex lines and {ne} element lines, found {len(lines) - 1} lines", path
        )

    vertices = np.empty((nv, 2))
    for i in range(nv):
        lineno, fields = lines[1 + i]
        if len(fields) != 2:
            raise MeshFormatError("vertex line must be 'x y'", path, lineno)
        for j, v in enumerate(fields):
            try:
                vertices[i, j] = float(v)
            except ValueError:
                raise MeshFormatError(f"'{v}' is not a number", path, lineno, j + 1) from None

    elements, subdomains = [], []
    for i in range(ne):
        lineno, fields = lines[1 + nv + i]
        values = ints(lineno, fields, "element")
        m = values[0]
        if m < 3:
            raise MeshFormatError("element needs at least 3 vertices", path, lineno, 1)
        if len(values) not in (m + 1, m + 2):
            raise MeshFormatError(f"element line must hold {m} indices and an optional id", path, lineno)
        idx = values[1 : m + 1]
        for j, v in enumerate(idx):
            if not 0 <= v < nv:
                raise MeshFormatError(f"vertex index {v} out of range", path, lineno, j + 2)
        elements.append(idx)
        subdomains.append(values[m + 1] if len(values) == m + 2 else 0)

    if len(lines) > 1 + nv + ne:
        raise MeshFormatError("trailing content after the last element", path, lines[1 + nv + ne][0])
    return PolygonalMesh(vertices, elements, subdomains, strict=strict)


def write_mesh(mesh, path):
    path = Path(path)
    out = [f"{mesh.n_vertices} {mesh.n_elements}"]
    out += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    for e, sid in zip(mesh.elements, mesh.subdomains.tolist()):
        out.append(" ".join(str(v) for v in (len(e), *e, sid)))
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path
