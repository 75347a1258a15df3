import math

import numpy as np
import pytest

from conftest import UNIT_SQUARE, single_element_mesh
from hho_plate.errors import MeshConnectivityError, MeshError, MeshFormatError
from hho_plate.generators import generate_unit_square
from hho_plate.mesh import PolygonalMesh, element_regularity, mesh_stats, read_mesh, write_mesh


def test_triangular_counts():
    stats = mesh_stats(generate_unit_square("triangular", 2))
    assert (stats.n_elements, stats.n_faces, stats.n_interior_faces, stats.n_boundary_faces) == (8, 16, 8, 8)


def test_cartesian_counts():
    stats = mesh_stats(generate_unit_square("cartesian", 3))
    assert (stats.n_elements, stats.n_faces, stats.n_interior_faces) == (9, 24, 12)
    assert stats.n_faces == stats.n_interior_faces + stats.n_boundary_faces


def test_structured_triangles_regularity():
    stats = mesh_stats(generate_unit_square("triangular", 4))
    assert 0.2 < stats.regularity <= 1.0
    assert stats.meshsize == pytest.approx(math.sqrt(2) / 4)


def test_unit_square_element_meshsize():
    mesh = single_element_mesh(UNIT_SQUARE)
    assert mesh.meshsize == pytest.approx(math.sqrt(2))
    assert mesh.boundary.all()


@pytest.mark.parametrize("family", ["triangular", "cartesian", "hexagonal"])
def test_geometry_invariants(family):
    mesh = generate_unit_square(family, 4)
    assert mesh.total_area == pytest.approx(1.0, rel=1e-12)
    rho = mesh_stats(mesh).regularity
    for t in range(mesh.n_elements):
        lengths = mesh.face_length[mesh.element_faces[t]]
        assert np.all(lengths <= mesh.element_diameter[t] + 1e-14)
        assert np.all(rho ** 2 * mesh.element_diameter[t] <= lengths + 1e-14)
        normals = mesh.outward_normals(t)
        assert np.allclose(np.linalg.norm(normals, axis=1), 1.0)
    for f in mesh.interior_faces:
        t1, t2 = mesh.face_elements[f]
        n1 = mesh.outward_normals(t1)[list(mesh.element_faces[t1]).index(f)]
        n2 = mesh.outward_normals(t2)[list(mesh.element_faces[t2]).index(f)]
        assert np.array_equal(n1 + n2, np.zeros(2))


def test_outward_normals_point_away_from_centroid():
    mesh = generate_unit_square("hexagonal", 3)
    for t in range(mesh.n_elements):
        mids = mesh.face_midpoint[mesh.element_faces[t]]
        assert np.all(np.einsum("ij,ij->i", mids - mesh.element_centroid[t], mesh.outward_normals(t)) > 0)


def test_boundary_flag_matches_incidence():
    mesh = generate_unit_square("triangular", 3)
    assert np.array_equal(mesh.boundary, mesh.face_elements[:, 1] == -1)
    mids = mesh.face_midpoint[mesh.boundary]
    on_edge = np.isclose(mids, 0.0) | np.isclose(mids, 1.0)
    assert on_edge.any(axis=1).all()


def test_element_regularity_of_right_triangle():
    mesh = single_element_mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    expected = (2.0 - math.sqrt(2.0)) / 2.0 / math.sqrt(2.0)
    assert element_regularity(mesh, 0) == pytest.approx(expected)


def test_round_trip(tmp_path):
    mesh = generate_unit_square("hexagonal", 3)
    path = write_mesh(mesh, tmp_path / "hex.mesh")
    again = read_mesh(path)
    assert np.array_equal(again.vertices, mesh.vertices)
    assert again.elements == mesh.elements
    assert np.array_equal(again.subdomains, mesh.subdomains)


def _write(tmp_path, text):
    path = tmp_path / "m.txt"
    path.write_text(text, encoding="utf-8")
    return path


def test_face_shared_by_three_elements(tmp_path):
    path = _write(
        tmp_path,
        "5 3\n0 0\n1 0\n0.5 1\n0.5 -1\n0.5 2\n3 0 1 2\n3 1 0 3\n3 0 1 4\n",
    )
    with pytest.raises(MeshConnectivityError, match="more than two"):
        read_mesh(path)


def test_clockwise_element_normalized_or_rejected(tmp_path):
    path = _write(tmp_path, "3 1\n0 0\n0 1\n1 0\n3 0 1 2\n")
    mesh = read_mesh(path)
    assert mesh.element_area[0] == pytest.approx(0.5)
    with pytest.raises(MeshError, match="clockwise"):
        read_mesh(path, strict=True)


def test_malformed_vertex_reports_line_and_field(tmp_path):
    path = _write(tmp_path, "3 1\n0 0\n1 abc\n0 1\n3 0 1 2\n")
    with pytest.raises(MeshFormatError) as info:
        read_mesh(path)
    assert info.value.line == 3
    assert info.value.field == 2


def test_subdomain_ids_read(tmp_path):
    path = _write(tmp_path, "4 2\n0 0\n1 0\n1 1\n0 1\n3 0 1 2 7\n3 0 2 3\n")
    mesh = read_mesh(path)
    assert list(mesh.subdomains) == [7, 0]


def test_zero_area_element():
    with pytest.raises(MeshError, match="zero area"):
        PolygonalMesh([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]])


def test_missing_file(tmp_path):
    with pytest.raises(MeshFormatError, match="not found"):
        read_mesh(tmp_path / "nope.mesh")
