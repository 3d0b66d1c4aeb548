"""Run configuration: JSON document plus command-line overrides.

The empty document reproduces the benchmark defaults (cantilever on
[0, 3] x [0, 1], volume fraction 0.5, SIMP exponent 3, filter radius 0.1,
stationarity/objective tolerances 1e-4 / 1e-5, method "simpl-b"). Unknown
keys are rejected.
"""

import json
import math
from dataclasses import dataclass, field

from .fem import build_mesh
from .optimize import METHODS, LineSearchConfig, StoppingConfig
from .physics import PDE_REL_TOL, ProblemSpec

__all__ = ["RunConfig", "ConfigurationError", "parse_config"]


class ConfigurationError(ValueError):
    """Malformed or invalid configuration; names the offending field."""


@dataclass
class RunConfig:
    method: str = "simpl-b"
    nx: int = 192
    ny: int = 64
    lx: float = 3.0
    ly: float = 1.0
    theta: float = 0.5
    rho0: float = 1e-6
    penal: float = 3.0
    r_min: float = 0.1
    young_modulus: float = 1.0
    poisson_ratio: float = 0.3
    line_search: LineSearchConfig = field(default_factory=LineSearchConfig)
    stopping: StoppingConfig = field(default_factory=StoppingConfig)
    pgd_step: float = 1.0
    oc_move_limit: float = 0.2
    oc_damping: float = 0.5
    volume_tol: float = 1e-10
    pde_rel_tol: float = PDE_REL_TOL
    out_dir: str = "out"
    write_vtk: bool = False

    def problem(self):
        """Build the ProblemSpec for this configuration."""
        mesh = build_mesh(self.nx, self.ny, self.lx, self.ly)
        return ProblemSpec(
            mesh=mesh, volume_fraction=self.theta, void_density=self.rho0,
            penal=self.penal, filter_radius=self.r_min,
            young_modulus=self.young_modulus, poisson_ratio=self.poisson_ratio)

    def validate(self):
        if self.method not in METHODS:
            raise ConfigurationError(
                f"method: expected one of {list(METHODS)}, got {self.method!r}")
        if self.nx < 1 or self.ny < 1:
            raise ConfigurationError(f"mesh: element counts must be >= 1, got {self.nx}x{self.ny}")
        if self.lx <= 0 or self.ly <= 0:
            raise ConfigurationError(f"mesh: extents must be > 0, got {self.lx}x{self.ly}")
        if not 0.0 < self.theta < 1.0:
            raise ConfigurationError(f"theta: must be in (0, 1), got {self.theta}")
        if not 0.0 < self.rho0 < 1.0:
            raise ConfigurationError(f"rho0: must be in (0, 1), got {self.rho0}")
        if self.penal <= 1.0:
            raise ConfigurationError(f"penal: must be > 1, got {self.penal}")
        if self.r_min <= 0.0:
            raise ConfigurationError(f"r_min: must be > 0, got {self.r_min}")
        if not 0.0 <= self.poisson_ratio < 0.5:
            raise ConfigurationError(f"nu: must be in [0, 0.5), got {self.poisson_ratio}")
        if self.young_modulus <= 0.0:
            raise ConfigurationError(f"E: must be > 0, got {self.young_modulus}")
        for name in ("pgd_step", "oc_move_limit", "oc_damping", "volume_tol"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name}: must be > 0")
        if not 0.0 < self.pde_rel_tol < 1.0:
            raise ConfigurationError(f"pde_rel_tol: must be in (0, 1), got {self.pde_rel_tol}")
        try:
            LineSearchConfig(**vars(self.line_search))
            StoppingConfig(**vars(self.stopping))
        except ValueError as err:
            raise ConfigurationError(str(err)) from err
        return self


_MESH_KEYS = {"nx", "ny", "lx", "ly", "h"}
_LINE_SEARCH_KEYS = {"beta": "backtrack", "c1": "armijo_c1",
                     "max_trials": "max_trials", "initial_step": "initial_step",
                     "step_cap": "step_cap"}
_STOPPING_KEYS = {"tol_stationarity": "tol_stationarity", "tol_objective": "tol_objective",
                  "probe_step": "probe_step", "max_iters": "max_iters"}
_TOP_KEYS = {"method", "mesh", "theta", "rho0", "penal", "r_min", "E", "nu",
             "line_search", "stopping", "pgd_step", "oc_move_limit", "oc_damping",
             "volume_tol", "pde_rel_tol", "out_dir", "write_vtk"}


def _reject_unknown(document, allowed, where):
    unknown = set(document) - allowed
    if unknown:
        raise ConfigurationError(f"unknown {where} key(s): {sorted(unknown)}")


def _mesh_from_document(doc, cfg):
    _reject_unknown(doc, _MESH_KEYS, "mesh")
    try:
        cfg.lx = float(doc.get("lx", cfg.lx))
        cfg.ly = float(doc.get("ly", cfg.ly))
        cfg_h = float(doc["h"]) if "h" in doc else None
        cfg_nx = int(doc["nx"]) if "nx" in doc else None
        cfg_ny = int(doc["ny"]) if "ny" in doc else None
    except (TypeError, ValueError) as err:
        raise ConfigurationError(f"mesh: {err}") from err
    if "h" in doc:
        if "nx" in doc or "ny" in doc:
            raise ConfigurationError("mesh: give either h or nx/ny, not both")
        h = cfg_h
        if h <= 0:
            raise ConfigurationError(f"mesh.h: must be > 0, got {h}")
        nx, ny = cfg.lx / h, cfg.ly / h
        if abs(nx - round(nx)) > 1e-9 * max(1.0, nx) or abs(ny - round(ny)) > 1e-9 * max(1.0, ny):
            raise ConfigurationError(f"mesh.h: {h} does not divide extents {cfg.lx} x {cfg.ly}")
        cfg.nx, cfg.ny = int(round(nx)), int(round(ny))
    else:
        if cfg_nx is not None:
            cfg.nx = cfg_nx
        if cfg_ny is not None:
            cfg.ny = cfg_ny


def config_from_dict(document):
    """Build and validate a RunConfig from a parsed JSON document."""
    if not isinstance(document, dict):
        raise ConfigurationError("configuration document must be a JSON object")
    _reject_unknown(document, _TOP_KEYS, "configuration")
    cfg = RunConfig()
    if "mesh" in document:
        if not isinstance(document["mesh"], dict):
            raise ConfigurationError("mesh: must be an object")
        _mesh_from_document(document["mesh"], cfg)

    def coerced(key, value, caster):
        try:
            return caster(value)
        except (TypeError, ValueError) as err:
            raise ConfigurationError(f"{key}: {err}") from err

    for key, attr, caster in (
            ("method", "method", str), ("theta", "theta", float),
            ("rho0", "rho0", float), ("penal", "penal", float),
            ("r_min", "r_min", float), ("E", "young_modulus", float),
            ("nu", "poisson_ratio", float), ("pgd_step", "pgd_step", float),
            ("oc_move_limit", "oc_move_limit", float),
            ("oc_damping", "oc_damping", float),
            ("volume_tol", "volume_tol", float),
            ("pde_rel_tol", "pde_rel_tol", float),
            ("out_dir", "out_dir", str), ("write_vtk", "write_vtk", bool)):
        if key in document:
            setattr(cfg, attr, coerced(key, document[key], caster))
    if "line_search" in document:
        sub = document["line_search"]
        if not isinstance(sub, dict):
            raise ConfigurationError("line_search: must be an object")
        _reject_unknown(sub, set(_LINE_SEARCH_KEYS), "line_search")
        for key, attr in _LINE_SEARCH_KEYS.items():
            if key in sub:
                caster = int if key == "max_trials" else float
                setattr(cfg.line_search, attr, coerced(f"line_search.{key}", sub[key], caster))
    if "stopping" in document:
        sub = document["stopping"]
        if not isinstance(sub, dict):
            raise ConfigurationError("stopping: must be an object")
        _reject_unknown(sub, set(_STOPPING_KEYS), "stopping")
        for key, attr in _STOPPING_KEYS.items():
            if key in sub:
                caster = int if key == "max_iters" else float
                setattr(cfg.stopping, attr, coerced(f"stopping.{key}", sub[key], caster))
    return cfg.validate()


def parse_config(path=None, overrides=None):
    """Load a JSON configuration file and apply command-line overrides.

    ``overrides`` maps RunConfig attribute paths (method, h, max_iters,
    out_dir, write_vtk) to values; overrides win over the file. A missing
    path uses the all-defaults document.
    """
    document = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                document = json.load(fh)
        except FileNotFoundError as err:
            raise ConfigurationError(f"configuration file not found: {path}") from err
        except json.JSONDecodeError as err:
            raise ConfigurationError(f"malformed JSON in {path}: {err}") from err
    cfg = config_from_dict(document)
    overrides = overrides or {}
    if overrides.get("method") is not None:
        cfg.method = overrides["method"]
    if overrides.get("h") is not None:
        h = float(overrides["h"])
        if h <= 0 or not (math.isclose(cfg.lx / h, round(cfg.lx / h), abs_tol=1e-9)
                          and math.isclose(cfg.ly / h, round(cfg.ly / h), abs_tol=1e-9)):
            raise ConfigurationError(f"h: {h} does not divide extents {cfg.lx} x {cfg.ly}")
        cfg.nx, cfg.ny = int(round(cfg.lx / h)), int(round(cfg.ly / h))
    if overrides.get("max_iters") is not None:
        cfg.stopping.max_iters = int(overrides["max_iters"])
    if overrides.get("out_dir") is not None:
        cfg.out_dir = overrides["out_dir"]
    if overrides.get("write_vtk"):
        cfg.write_vtk = True
    return cfg.validate()
