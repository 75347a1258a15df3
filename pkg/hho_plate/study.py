"""Convergence studies and eta sweeps: configuration, the study runner and CSV output."""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from hho_plate.assembly import SOLVERS, assemble, dump_local_operators, export_matrix, solve
from hho_plate.errors import ConfigError, HHOError
from hho_plate.generators import FAMILIES
from hho_plate.postproc import CSV_COLUMNS, eoc, error_report, flux_report
from hho_plate.problems import get_problem, level_mesh, problem_defaults, problem_name
from hho_plate.polyspace import MaterialTensor
from hho_plate.utils import parse_number_list, to_float

logger = logging.getLogger(__name__)

MAX_DEGREE = 4
DEFAULT_PROBLEM = "square_manufactured"
THRESHOLDS = ("min_eoc_energy", "min_eoc_l2", "energy_min", "energy_max", "max_flux_residual")


class StudyConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    problem: str = DEFAULT_PROBLEM
    k: int = 1
    family: str = "triangular"
    levels: int = 4
    first_level: int = 1
    eta: float = 1.0
    eta_sweep: Optional[List[float]] = None
    materials: Dict[int, List[float]] = Field(default_factory=dict)
    mesh: Optional[Path] = None
    solver: str = "direct"
    tol: float = 1e-10
    out: Optional[Path] = None
    flux_report: bool = False
    export_matrix: Optional[Path] = None
    dump_local: Optional[Path] = None
    min_eoc_energy: Optional[float] = None
    min_eoc_l2: Optional[float] = None
    energy_min: Optional[float] = None
    energy_max: Optional[float] = None
    max_flux_residual: Optional[float] = None
    threads: Optional[int] = None

    @field_validator("problem")
    @classmethod
    def _problem(cls, v):
        return problem_name(v)

    @field_validator("k")
    @classmethod
    def _degree(cls, v):
        if not 1 <= v <= MAX_DEGREE:
            raise ValueError(f"k must be in 1..{MAX_DEGREE}; k >= 1 is required for coercivity")
        return v

    @field_validator("family")
    @classmethod
    def _family(cls, v):
        if v not in FAMILIES:
            raise ValueError(f"family must be one of {', '.join(FAMILIES)}")
        return v

    @field_validator("levels")
    @classmethod
    def _levels(cls, v):
        if v < 1:
            raise ValueError("levels must be >= 1")
        return v

    @field_validator("first_level")
    @classmethod
    def _first_level(cls, v):
        if v < 0:
            raise ValueError("first_level must be >= 0")
        return v

    @field_validator("eta")
    @classmethod
    def _eta(cls, v):
        if not v > 0:
            raise ValueError("eta must be > 0")
        return v

    @field_validator("eta_sweep")
    @classmethod
    def _eta_sweep(cls, v):
        if v is not None and (not v or any(not x > 0 for x in v)):
            raise ValueError("eta sweep must be a non-empty list of values > 0")
        return v

    @field_validator("materials")
    @classmethod
    def _materials(cls, v):
        for values in v.values():
            MaterialTensor.from_upper(values)
        return v

    @field_validator("solver")
    @classmethod
    def _solver(cls, v):
        if v not in SOLVERS:
            raise ValueError(f"solver must be one of {', '.join(SOLVERS)}")
        return v

    @field_validator("tol")
    @classmethod
    def _tol(cls, v):
        if not 0 < v < 1:
            raise ValueError("tol must lie in (0, 1)")
        return v

    @field_validator("threads")
    @classmethod
    def _threads(cls, v):
        if v is not None and v < 0:
            raise ValueError("threads must be >= 0")
        return v

    @model_validator(mode="after")
    def _mesh_file(self):
        if self.problem == "custom_mesh_file" and self.mesh is None:
            raise ValueError("problem custom_mesh_file needs a mesh file (--mesh <path>)")
        if self.mesh is not None and not self.mesh.is_file():
            raise ValueError(f"mesh file not found: {self.mesh}")
        return self

    @property
    def etas(self):
        return list(self.eta_sweep) if self.eta_sweep else [self.eta]

    @property
    def level_range(self):
        return list(range(self.first_level, self.first_level + self.levels))

    def material_tensors(self):
        return {sid: MaterialTensor.from_upper(v) for sid, v in self.materials.items()}

    def thresholds(self):
        return {name: getattr(self, name) for name in THRESHOLDS if getattr(self, name) is not None}


BOOL_TRUE = {"1", "true", "yes", "on"}
BOOL_FALSE = {"0", "false", "no", "off"}


def _parse_bool(text, name):
    t = str(text).strip().lower()
    if t in BOOL_TRUE:
        return True
    if t in BOOL_FALSE:
        return False
    raise ConfigError(f"{name}: expected true/false, got '{text}'")


def read_config_file(path):
    """Flat 'key = value' file; '#' starts a comment; materials as 'material.<sid> = six numbers'."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    values, materials = {}, {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key.startswith("material."):
            sid = key.split(".", 1)[1]
            if not sid.lstrip("-").isdigit():
                raise ConfigError(f"{path}:{lineno}: material id must be an integer, got '{sid}'")
            materials[int(sid)] = [to_float(v, key) for v in value.replace(",", " ").split()]
        elif key == "eta_sweep":
            values[key] = parse_number_list(value, key)
        elif key == "flux_report":
            values[key] = _parse_bool(value, key)
        else:
            values[key] = value
    if materials:
        values["materials"] = materials
    return values


def _first_error(exc):
    err = exc.errors()[0]
    where = ".".join(str(p) for p in err.get("loc", ()))
    msg = err.get("msg", str(exc)).removeprefix("Value error, ")
    return f"{where}: {msg}" if where else msg


def parse_config(overrides=None, path=None):
    """Defaults < problem defaults < config file < overrides (command-line flags)."""
    values = read_config_file(path) if path is not None else {}
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if "eta" in (overrides or {}) and overrides["eta"] is not None:
        values.pop("eta_sweep", None)
    values = {**problem_defaults(values.get("problem", DEFAULT_PROBLEM)), **values}
    try:
        return StudyConfig(**values)
    except ValidationError as exc:
        raise ConfigError(_first_error(exc)) from None


@dataclass
class StudyResult:
    frame: pd.DataFrame
    summary: dict
    failures: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.failures


class StudyRunner:
    """Runs the refinement ladder (and eta values per level), accumulating one row per solve."""

    def __init__(self, config, progress=print):
        self.config = config
        self.case = get_problem(config.problem)
        self.materials = config.material_tensors() or self.case.material
        self.progress = progress or (lambda *_: None)
        self.reports = []
        self.flux_frames = []
        self.flux_maxima = []
        self.last_system = None

    def run(self):
        cfg = self.config
        previous_mesh = None
        previous = {}
        for level in cfg.level_range:
            try:
                mesh = level_mesh(self.case, cfg.family, level, cfg.mesh, previous_mesh)
            except HHOError as exc:
                self._failed(exc, level)
            previous_mesh = mesh
            for i, eta in enumerate(cfg.etas):
                report = self.run_level(mesh, level, eta)
                prior = previous.get(i)
                if prior is not None:
                    report.eoc_energy = eoc([(prior.h, prior.err_energy), (report.h, report.err_energy)])[0]
                    report.eoc_l2 = eoc([(prior.h, prior.err_l2), (report.h, report.err_l2)])[0]
                    if report.energy < prior.energy:
                        logger.warning("energy decreased from level %d to %d (eta=%g)", prior.level, level, eta)
                previous[i] = report
                self.reports.append(report)
                self.progress(
                    f"level {level} eta={eta:g}: h={report.h:.4e} T={report.n_elem} F={report.n_face} "
                    f"err_a={report.err_energy:.4e} (eoc {report.eoc_energy:.2f}) "
                    f"err_l2={report.err_l2:.4e} (eoc {report.eoc_l2:.2f}) "
                    f"err_face={report.err_face:.3e} E={report.energy:.10e}"
                )
                self.export_results_csv()
        self._export_system()
        return self.result()

    def _failed(self, exc, level, eta=None):
        """Tags exc with the level, writes the rows finished so far and re-raises."""
        exc.level = level
        where = f"level {level}" if eta is None else f"level {level} (eta={eta:g})"
        logger.error("%s failed: %s", where, exc)
        self.export_results_csv()
        raise exc

    def run_level(self, mesh, level, eta):
        cfg = self.config
        try:
            system = assemble(mesh, cfg.k, self.materials, eta, self.case.load, threads=cfg.threads)
            solution = solve(system, cfg.solver, cfg.tol)
            report = error_report(solution, self.case.exact, level)
            if cfg.flux_report or cfg.max_flux_residual is not None:
                flux = flux_report(solution)
                self.flux_maxima.append(flux.max_residual)
                frame = flux.to_frame()
                frame["level"] = level
                frame["eta"] = eta
                self.flux_frames.append(frame)
        except HHOError as exc:
            self._failed(exc, level, eta)
        self.last_system = system
        return report

    def to_frame(self):
        return pd.DataFrame([r.as_row() for r in self.reports], columns=CSV_COLUMNS)

    def export_results_csv(self):
        cfg = self.config
        if cfg.out is None:
            return None
        cfg.out.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(cfg.out, index=False, float_format="%.16e")
        if self.flux_frames:
            flux_path = cfg.out.with_name(cfg.out.stem + "_flux.csv")
            pd.concat(self.flux_frames, ignore_index=True).to_csv(flux_path, index=False, float_format="%.16e")
        return cfg.out

    def _export_system(self):
        cfg = self.config
        if self.last_system is None:
            return
        if cfg.export_matrix is not None:
            path = export_matrix(self.last_system, cfg.export_matrix)
            logger.info("condensed matrix written to %s", path)
        if cfg.dump_local is not None:
            path = dump_local_operators(self.last_system, cfg.dump_local)
            logger.info("local operators written to %s", path)

    def final_reports(self):
        """Last report of every eta series."""
        last = {}
        for r in self.reports:
            last[r.eta] = r
        return list(last.values())

    def summary(self):
        finals = self.final_reports()
        out = {
            "problem": self.config.problem,
            "k": self.config.k,
            "rows": len(self.reports),
            "final_eoc_energy": [r.eoc_energy for r in finals],
            "final_eoc_l2": [r.eoc_l2 for r in finals],
            "final_energy": [r.energy for r in finals],
        }
        if self.case.reference_energy is not None:
            out["energy_gap"] = [r.energy - self.case.reference_energy for r in finals]
        if self.flux_maxima:
            out["max_flux_residual"] = float(np.max(self.flux_maxima))
        if len(finals) > 1:
            errs = [r.err_energy for r in finals if np.isfinite(r.err_energy) and r.err_energy > 0]
            if errs:
                out["eta_error_ratio"] = max(errs) / min(errs)
        return out

    def check_thresholds(self):
        failures = []
        limits = self.config.thresholds()
        finals = self.final_reports()

        def bad(value, ok):
            return value is None or not math.isfinite(value) or not ok(value)

        for r in finals:
            if "min_eoc_energy" in limits and bad(r.eoc_energy, lambda v: v >= limits["min_eoc_energy"]):
                failures.append(f"eta={r.eta:g}: final energy EOC {r.eoc_energy:.3f} < {limits['min_eoc_energy']}")
            if "min_eoc_l2" in limits and bad(r.eoc_l2, lambda v: v >= limits["min_eoc_l2"]):
                failures.append(f"eta={r.eta:g}: final L2 EOC {r.eoc_l2:.3f} < {limits['min_eoc_l2']}")
            if "energy_min" in limits and bad(r.energy, lambda v: v >= limits["energy_min"]):
                failures.append(f"eta={r.eta:g}: final energy {r.energy:.6e} < {limits['energy_min']}")
            if "energy_max" in limits and bad(r.energy, lambda v: v <= limits["energy_max"]):
                failures.append(f"eta={r.eta:g}: final energy {r.energy:.6e} > {limits['energy_max']}")
        if "max_flux_residual" in limits:
            worst = max(self.flux_maxima, default=float("nan"))
            if bad(worst, lambda v: v <= limits["max_flux_residual"]):
                failures.append(f"flux residual {worst:.3e} > {limits['max_flux_residual']}")
        for f in failures:
            logger.warning("threshold failed: %s", f)
        return failures

    def result(self):
        return StudyResult(self.to_frame(), self.summary(), self.check_thresholds())


def run_study(config, progress=print):
    return StudyRunner(config, progress).run()
