import math

import numpy as np
import pandas as pd
import pytest

from hho_plate.errors import ConfigError, MeshError
from hho_plate.generators import generate_unit_square
from hho_plate.mesh import write_mesh
from hho_plate.polyspace import MaterialTensor
from hho_plate.postproc import CSV_COLUMNS
from hho_plate.problems import (
    ORTHOTROPIC,
    SQUARE_EXACT_ENERGY,
    builtin_square_case,
    bump_deflection,
    custom_mesh_case,
    get_problem,
    level_mesh,
    plate_load,
    problem_name,
)
from hho_plate.study import parse_config, read_config_file, run_study

SQRT2 = math.sqrt(2.0)


def _divdiv_fd(u, material, point, h):
    """div div (A hess u) by central differences of the moment field, one Richardson step."""

    def moments(p):
        return u.hessian_voigt(np.atleast_2d(p)) @ material.matrix.T

    def once(step):
        x = np.asarray(point, dtype=float)
        ex, ey = np.array([step, 0.0]), np.array([0.0, step])
        mid = moments(x)[0]
        dxx = (moments(x + ex)[0] - 2 * mid + moments(x - ex)[0]) / step ** 2
        dyy = (moments(x + ey)[0] - 2 * mid + moments(x - ey)[0]) / step ** 2
        dxy = (
            moments(x + ex + ey)[0] - moments(x + ex - ey)[0] - moments(x - ex + ey)[0] + moments(x - ex - ey)[0]
        ) / (4 * step ** 2)
        return dxx[0] + SQRT2 * dxy[2] + dyy[1]

    return (4 * once(h / 2) - once(h)) / 3


def test_square_case_values():
    case = get_problem("square-manufactured")
    centre = np.array([[0.5, 0.5]])
    assert case.load.value(centre)[0] == pytest.approx(5.0)
    assert case.exact.value(centre)[0] == pytest.approx(1.0 / 256.0)
    assert case.has_exact


def test_plate_load_of_identity_matches_builtin(rng):
    pts = rng.uniform(0, 1, size=(20, 2))
    builtin = builtin_square_case().load.value(pts)
    assert np.allclose(plate_load(bump_deflection(), MaterialTensor.identity()).value(pts), builtin, atol=1e-12)


@pytest.mark.parametrize("point", [(0.3, 0.7), (0.5, 0.5), (0.81, 0.12)])
def test_orthotropic_load_against_finite_differences(point):
    case = get_problem("square_orthotropic")
    assert case.material is ORTHOTROPIC
    expected = case.load.value(np.array([point]))[0]
    assert _divdiv_fd(case.exact, case.material, point, 0.01) == pytest.approx(expected, rel=1e-6, abs=1e-8)


def test_unknown_problem():
    with pytest.raises(ConfigError, match="unknown problem"):
        problem_name("circle")


def test_level_mesh_for_mesh_file(tmp_path):
    path = write_mesh(generate_unit_square("triangular", 1), tmp_path / "two.mesh")
    case = custom_mesh_case()
    assert not case.has_exact
    first = level_mesh(case, "triangular", 1, path)
    assert first.n_elements == 2
    assert level_mesh(case, "triangular", 2, path, previous=first).n_elements == 8
    assert level_mesh(case, "triangular", 3, path).n_elements == 32
    with pytest.raises(ConfigError, match="--mesh"):
        level_mesh(case, "triangular", 1)


def test_parse_config_defaults():
    cfg = parse_config()
    assert (cfg.problem, cfg.k, cfg.family, cfg.levels, cfg.eta) == ("square_manufactured", 1, "triangular", 4, 1.0)
    assert cfg.etas == [1.0]
    assert cfg.level_range == [1, 2, 3, 4]
    assert cfg.thresholds() == {}


def test_parse_config_overrides():
    cfg = parse_config({"k": 3, "family": "hexagonal", "eta": None, "first_level": 2, "levels": 2})
    assert cfg.k == 3
    assert cfg.family == "hexagonal"
    assert cfg.eta == 1.0
    assert cfg.level_range == [2, 3]


@pytest.mark.parametrize(
    "overrides, message",
    [
        ({"k": 0}, "k must be"),
        ({"k": 5}, "k must be"),
        ({"eta": 0.0}, "eta must be"),
        ({"eta_sweep": [1.0, -2.0]}, "eta sweep"),
        ({"family": "voronoi"}, "family"),
        ({"solver": "gmres"}, "solver"),
        ({"materials": {1: [1, 2, 0, 1, 0, 1]}}, "positive definite"),
        ({"problem": "custom-mesh-file"}, "needs a mesh file"),
        ({"mesh": "/nonexistent/plate.mesh"}, "mesh file not found"),
    ],
)
def test_parse_config_errors(overrides, message):
    with pytest.raises(ConfigError, match=message):
        parse_config(overrides)


def test_config_file_and_precedence(tmp_path):
    path = tmp_path / "study.cfg"
    path.write_text(
        "# orthotropic sweep\n"
        "problem = square-orthotropic\n"
        "k = 3\n"
        "family = cartesian\n"
        "eta-sweep = 0.1, 1, 10\n"
        "flux_report = yes\n"
        "material.1 = 2 0.3 0 1 0 0.6   # upper triangle\n",
        encoding="utf-8",
    )
    values = read_config_file(path)
    assert values["materials"] == {1: [2.0, 0.3, 0.0, 1.0, 0.0, 0.6]}
    cfg = parse_config({"k": 2}, path)
    assert (cfg.problem, cfg.k, cfg.family, cfg.flux_report) == ("square_orthotropic", 2, "cartesian", True)
    assert cfg.etas == [0.1, 1.0, 10.0]
    assert cfg.material_tensors()[1] == ORTHOTROPIC
    assert parse_config({"eta": 2.0}, path).etas == [2.0]


def test_config_file_errors(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("colour = red\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="colour"):
        parse_config(path=path)
    path.write_text("k 3\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="key = value"):
        parse_config(path=path)
    with pytest.raises(ConfigError, match="not found"):
        parse_config(path=tmp_path / "missing.cfg")


def test_run_study_rows_and_csv(tmp_path):
    out = tmp_path / "a.csv"
    lines = []
    result = run_study(parse_config({"levels": 3, "out": str(out)}), progress=lines.append)
    assert result.passed
    assert len(result.frame) == 3
    assert list(result.frame.columns) == CSV_COLUMNS
    assert len(lines) == 3 and lines[0].startswith("level 1")
    frame = pd.read_csv(out)
    assert list(frame.columns) == CSV_COLUMNS
    assert math.isnan(frame["eoc_energy"][0])
    assert frame["eoc_energy"][2] > 1.5
    assert (frame["energy"] < 0).all()
    again = tmp_path / "b.csv"
    run_study(parse_config({"levels": 3, "out": str(again)}), progress=None)
    assert out.read_bytes() == again.read_bytes()


def test_eta_sweep_rows():
    result = run_study(parse_config({"levels": 2, "eta_sweep": [0.1, 10.0], "family": "cartesian"}), progress=None)
    assert len(result.frame) == 4
    assert sorted(set(result.frame["eta"])) == [0.1, 10.0]
    assert result.summary["eta_error_ratio"] >= 1.0
    assert len(result.summary["final_energy"]) == 2


def test_threshold_failure_and_flux(tmp_path):
    out = tmp_path / "r.csv"
    cfg = parse_config({"levels": 2, "min_eoc_energy": 100.0, "max_flux_residual": 1e-6, "out": str(out)})
    result = run_study(cfg, progress=None)
    assert not result.passed
    assert len(result.failures) == 1
    assert "EOC" in result.failures[0]
    assert result.summary["max_flux_residual"] <= 1e-6
    assert (tmp_path / "r_flux.csv").is_file()


def test_custom_mesh_study(tmp_path):
    path = write_mesh(generate_unit_square("cartesian", 2), tmp_path / "quad.mesh")
    result = run_study(parse_config({"problem": "custom_mesh_file", "mesh": str(path), "levels": 2}), progress=None)
    assert list(result.frame["n_elem"]) == [4, 16]
    assert result.frame["err_energy"].isna().all()
    assert (result.frame["energy"] < 0).all()


def test_final_level_exports(tmp_path):
    cfg = parse_config(
        {"levels": 2, "export_matrix": str(tmp_path / "final"), "dump_local": str(tmp_path / "local.txt")}
    )
    run_study(cfg, progress=None)
    assert (tmp_path / "final.mtx").is_file()
    assert (tmp_path / "local.txt").read_text(encoding="utf-8").startswith("element 0\n")


def test_lshape_problem_defaults():
    cfg = parse_config({"problem": "lshape-uniform"})
    assert (cfg.k, cfg.levels) == (2, 5)
    assert cfg.thresholds() == {"energy_min": -2.83e-05, "energy_max": -2.79e-05}
    cfg = parse_config({"problem": "lshape_uniform", "k": 1, "energy_max": 0.0})
    assert (cfg.k, cfg.levels, cfg.energy_max) == (1, 5, 0.0)
    assert parse_config().thresholds() == {}


def test_lshape_defaults_yield_to_config_file(tmp_path):
    path = tmp_path / "lshape.cfg"
    path.write_text("problem = lshape_uniform\nlevels = 2\n", encoding="utf-8")
    cfg = parse_config(path=path)
    assert (cfg.k, cfg.levels) == (2, 2)


def test_summary_reports_gap_to_reference_energy():
    result = run_study(parse_config({"levels": 2}), progress=None)
    final = result.summary["final_energy"][0]
    assert result.summary["energy_gap"] == [pytest.approx(final - SQUARE_EXACT_ENERGY)]
    custom = get_problem("custom_mesh_file")
    assert custom.reference_energy is None


def test_mesh_failure_keeps_level_and_rows(tmp_path):
    path = write_mesh(generate_unit_square("hexagonal", 2), tmp_path / "hex.mesh")
    out = tmp_path / "hex.csv"
    cfg = parse_config({"problem": "custom_mesh_file", "mesh": str(path), "levels": 2, "out": str(out)})
    with pytest.raises(MeshError, match="unsupported element shape") as info:
        run_study(cfg, progress=None)
    assert info.value.level == 2
    assert len(pd.read_csv(out)) == 1
