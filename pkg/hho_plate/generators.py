"""Built-in mesh families and uniform refinement.

Unit square families: triangular (each grid square split along the (i,j)-(i+1,j+1) diagonal),
cartesian, and a flat-top honeycomb of horizontal pitch 1/n and height 1/n, clipped by the
square. The L-shape is the unit square minus (1/2,1)^2, triangulated on the grid of step 1/(2n).
"""
import numpy as np

from hho_plate.errors import MeshError
from hho_plate.mesh import PolygonalMesh, signed_area

FAMILIES = ("triangular", "cartesian", "hexagonal")
SNAP_TOL = 1e-12


def _grid_index(n):
    return lambda i, j: j * (n + 1) + i


def _grid_vertices(n, step):
    xs = np.arange(n + 1) * step
    xx, yy = np.meshgrid(xs, xs)
    return np.column_stack([xx.ravel(), yy.ravel()])


def _split_square(v00, v10, v11, v01):
    return [(v00, v10, v11), (v00, v11, v01)]


def generate_unit_square(family, n):
    if n < 1:
        raise MeshError(f"n must be >= 1, got {n}")
    if family == "triangular":
        idx = _grid_index(n)
        elements = []
        for j in range(n):
            for i in range(n):
                elements += _split_square(idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1))
        return PolygonalMesh(_grid_vertices(n, 1.0 / n), elements)
    if family == "cartesian":
        idx = _grid_index(n)
        elements = [
            (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1))
            for j in range(n)
            for i in range(n)
        ]
        return PolygonalMesh(_grid_vertices(n, 1.0 / n), elements)
    if family == "hexagonal":
        return _honeycomb(n)
    raise MeshError(f"unknown mesh family '{family}', expected one of {', '.join(FAMILIES)}")


def _clip(points, axis, value, keep_below):
    def inside(p):
        return p[axis] <= value if keep_below else p[axis] >= value

    out = []
    m = len(points)
    for i in range(m):
        p, q = points[i], points[(i + 1) % m]
        p_in, q_in = inside(p), inside(q)
        if p_in:
            out.append(p)
        if p_in != q_in:
            t = (value - p[axis]) / (q[axis] - p[axis])
            r = p + t * (q - p)
            r[axis] = value
            out.append(r)
    return out


def _dedupe(points):
    out = []
    for p in points:
        if not out or np.abs(p - out[-1]).max() > SNAP_TOL:
            out.append(p)
    while len(out) > 1 and np.abs(out[0] - out[-1]).max() <= SNAP_TOL:
        out.pop()
    return out


def _honeycomb(n):
    """Flat-top honeycomb: column pitch 1/n, row height 1/n, full cells 4/(3n) wide corner to corner."""
    r = 2.0 / (3.0 * n)
    hgt = 1.0 / n
    offsets = np.array(
        [[r, 0.0], [r / 2, hgt / 2], [-r / 2, hgt / 2], [-r, 0.0], [-r / 2, -hgt / 2], [r / 2, -hgt / 2]]
    )
    lookup, vertices, elements = {}, [], []

    def vertex_id(p):
        key = (round(float(p[0]), 11), round(float(p[1]), 11))
        if key not in lookup:
            lookup[key] = len(vertices)
            vertices.append(p)
        return lookup[key]

    for i in range(-1, n + 2):
        cx = i / n
        centers = [j * hgt for j in range(-1, n + 2)] if i % 2 == 0 else [(j + 0.5) * hgt for j in range(-1, n + 1)]
        for cy in centers:
            pts = np.array([cx, cy]) + offsets
            pts[np.abs(pts) < SNAP_TOL] = 0.0
            pts[np.abs(pts - 1.0) < SNAP_TOL] = 1.0
            poly = list(pts)
            for axis in (0, 1):
                poly = _clip(poly, axis, 0.0, keep_below=False) if poly else poly
                poly = _clip(poly, axis, 1.0, keep_below=True) if poly else poly
            poly = _dedupe(poly)
            if len(poly) < 3 or signed_area(np.array(poly)) < 1e-3 * r * hgt:
                continue
            elements.append([vertex_id(p) for p in poly])
    return PolygonalMesh(np.array(vertices), elements)


def generate_lshape_triangular(n):
    """(0,1)^2 minus (1/2,1)^2: three sub-squares, each carrying 2n^2 triangles."""
    if n < 1:
        raise MeshError(f"n must be >= 1, got {n}")
    m = 2 * n
    idx = _grid_index(m)
    elements = []
    for j in range(m):
        for i in range(m):
            if i >= n and j >= n:
                continue
            elements += _split_square(idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1))
    used = sorted({v for e in elements for v in e})
    renumber = {v: k for k, v in enumerate(used)}
    vertices = _grid_vertices(m, 1.0 / m)[used]
    return PolygonalMesh(vertices, [[renumber[v] for v in e] for e in elements])


def _is_axis_aligned_quad(points):
    d = np.roll(points, -1, axis=0) - points
    scale = np.abs(d).max()
    return bool(np.all(np.minimum(np.abs(d[:, 0]), np.abs(d[:, 1])) <= 1e-12 * scale))


def uniform_refine(mesh):
    """Splits every triangle (edge-midpoint rule) or axis-aligned quad into 4 children."""
    nv, nf = mesh.n_vertices, mesh.n_faces
    midpoints = mesh.face_midpoint
    sids = np.repeat(mesh.subdomains, 4)
    if mesh.is_triangular():
        vertices = np.vstack([mesh.vertices, midpoints])
        elements = []
        for e, faces in zip(mesh.elements, mesh.element_faces):
            a, b, c = e
            mab, mbc, mca = (nv + int(f) for f in faces)
            elements += [(a, mab, mca), (mab, b, mbc), (mca, mbc, c), (mab, mbc, mca)]
        return PolygonalMesh(vertices, elements, sids)
    if all(len(e) == 4 and _is_axis_aligned_quad(mesh.element_vertices(t)) for t, e in enumerate(mesh.elements)):
        vertices = np.vstack([mesh.vertices, midpoints, mesh.element_centroid])
        elements = []
        for t, (e, faces) in enumerate(zip(mesh.elements, mesh.element_faces)):
            v0, v1, v2, v3 = e
            m0, m1, m2, m3 = (nv + int(f) for f in faces)
            c = nv + nf + t
            elements += [(v0, m0, c, m3), (m0, v1, m1, c), (c, m1, v2, m2), (m3, c, m2, v3)]
        return PolygonalMesh(vertices, elements, sids)
    raise MeshError("unsupported element shape for refinement: need all triangles or all axis-aligned quads")
