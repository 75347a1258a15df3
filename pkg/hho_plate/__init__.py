"""Hybrid High-Order discretization of clamped Kirchhoff-Love plates on polygonal meshes."""
from hho_plate.assembly import assemble, build_dof_map, solve
from hho_plate.errors import ConfigError, HHOError, MeshError, SingularLocalSystemError, SolverError
from hho_plate.generators import generate_lshape_triangular, generate_unit_square, uniform_refine
from hho_plate.mesh import PolygonalMesh, mesh_stats, read_mesh, write_mesh
from hho_plate.polyspace import MaterialTensor
from hho_plate.postproc import discrete_energy, flux_report
from hho_plate.study import StudyConfig, parse_config, run_study

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "HHOError",
    "MaterialTensor",
    "MeshError",
    "PolygonalMesh",
    "SingularLocalSystemError",
    "SolverError",
    "StudyConfig",
    "assemble",
    "build_dof_map",
    "discrete_energy",
    "flux_report",
    "generate_lshape_triangular",
    "generate_unit_square",
    "mesh_stats",
    "parse_config",
    "read_mesh",
    "run_study",
    "solve",
    "uniform_refine",
    "write_mesh",
]
