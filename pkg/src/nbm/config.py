"""Run configuration files and output writers.

Configs are YAML. Every physical quantity is a string with an explicit
unit (``"103.4 bar"``); bare numbers for physical inputs are rejected.
Counts and dimensionless tuning knobs (grid sizes, N_b, seeds, tolerances)
are plain numbers.

A scenario block either names a preset and overrides parts of it, or spells
out every field::

    scenario:
      preset: co2_homogeneous
      grid: [50, 50]
      time: {end: 90 day, darcy_dt: 30 day, n_sub: 1}
    basis: {nb: 1000, layers: 2}
    solver: {picard_tol: 1.0e-8, picard_max: 50, weighting: energy}
"""

import copy
import csv
import json
import logging
import os
from dataclasses import asdict, dataclass, field

import numpy as np
import yaml

from . import units
from .geometry import EDGES, BoundaryConditions, EdgeBC, Grid2D, InflowSchedule
from .problems import (GrfParams, Scenario, build_co2_case, gen_grf_permeability, read_perm_csv)
from .properties import FluidProps, PermeabilityField

log = logging.getLogger(__name__)

PRESETS = ("co2_homogeneous", "co2_heterogeneous")
FIELD_COLUMNS = ("x", "y", "p", "qx", "qy", "ux", "uy")


class ConfigError(ValueError):
    """Invalid or incomplete configuration (CLI exit code 2)."""


@dataclass
class RunConfig:
    subcommand: str
    scenario: dict = field(default_factory=dict)
    basis: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    out: str = "out"
    seed: int = 0
    overrides: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)     # subcommand-specific settings
    config_path: str = None

    def to_dict(self):
        return asdict(self)

    def save(self, path):
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown run-config keys {sorted(extra)}")
        return cls(**d)


def load_yaml(path):
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def _q(value, dim, what):
    try:
        return units.parse_quantity(value, dim)
    except units.UnitError as exc:
        raise ConfigError(f"{what}: {exc}") from exc


def _preset(name, n):
    if name not in PRESETS:
        raise ConfigError(f"unknown scenario preset {name!r}; choose from {PRESETS}")
    return build_co2_case(name.split("_", 1)[1], n=n)


def _permeability(spec, grid, base_dir):
    if "value" in spec:
        return PermeabilityField(grid, _q(spec["value"], "permeability", "permeability.value"))
    if "csv" in spec:
        path = os.path.join(base_dir, spec["csv"])
        with open(path) as fh:
            perm = read_perm_csv(fh, grid.box)
        return perm if perm.grid == grid else perm.resample(grid)
    if "grf" in spec:
        g = spec["grf"]
        prm = GrfParams(k_avg=_q(g["k_avg"], "permeability", "grf.k_avg"),
                        v=float(g["v"]), lx=_q(g["lx"], "length", "grf.lx"),
                        ly=_q(g["ly"], "length", "grf.ly"),
                        theta=_q(g.get("theta", "0 deg"), "angle", "grf.theta"),
                        seed=int(g.get("seed", 0)))
        return gen_grf_permeability(prm, grid)
    raise ConfigError("permeability needs one of 'value', 'csv' or 'grf'")


def build_scenario(spec: dict, base_dir=".", grid_override=None) -> Scenario:
    """Scenario from a config mapping; see the module docstring."""
    spec = dict(spec or {})
    nx, ny = grid_override or spec.get("grid", (50, 50))
    nx, ny = int(nx), int(ny)
    if nx < 2 or ny < 2:
        raise ConfigError(f"grid must be at least 2x2, got {nx}x{ny}")
    if "preset" in spec:
        if nx != ny:
            raise ConfigError("CO2 presets use square grids")
        scn = _preset(spec["preset"], nx)
    else:
        for key in ("domain", "fluid", "boundary", "permeability", "initial"):
            if key not in spec:
                raise ConfigError(f"scenario without a preset needs '{key}'")
        dom = spec["domain"]
        x0, x1 = (_q(v, "length", "domain.x") for v in dom["x"])
        y0, y1 = (_q(v, "length", "domain.y") for v in dom["y"])
        grid = Grid2D(x0, x1, y0, y1, nx, ny)
        fl = spec["fluid"]
        props = FluidProps(mu=_q(fl["mu"], "viscosity", "fluid.mu"),
                           c_f=_q(fl["c_f"], "compressibility", "fluid.c_f"),
                           rho0=_q(fl["rho0"], "density", "fluid.rho0"),
                           p0=_q(fl["p0"], "pressure", "fluid.p0"),
                           eps=_q(fl["eps"], "dimensionless", "fluid.eps"))
        scn = Scenario(spec.get("name", "custom"), grid,
                       _permeability(spec["permeability"], grid, base_dir), props,
                       BoundaryConditions({e: EdgeBC("flux", 0.0) for e in EDGES}),
                       p_init=_q(spec["initial"]["p"], "pressure", "initial.p"))
    if "boundary" in spec:
        scn.bcs = _boundary(spec["boundary"], spec.get("inflow", {}))
    elif "inflow" in spec:
        scn.bcs = BoundaryConditions(scn.bcs.edges, _inflow(spec["inflow"]))
    if "permeability" in spec and "preset" in spec:
        scn.perm = _permeability(spec["permeability"], scn.grid, base_dir)
    if "initial" in spec:
        ini = spec["initial"]
        if "p" in ini:
            scn.p_init = _q(ini["p"], "pressure", "initial.p")
        if "c" in ini:
            scn.c_init = _q(ini["c"], "concentration", "initial.c")
    tm = spec.get("time", {})
    if "end" in tm:
        scn.t_end = _q(tm["end"], "time", "time.end")
    if "darcy_dt" in tm:
        scn.darcy_dt = _q(tm["darcy_dt"], "time", "time.darcy_dt")
    if "n_sub" in tm:
        scn.n_sub = int(tm["n_sub"])
    if scn.darcy_dt <= 0 or scn.t_end <= 0 or scn.n_sub < 1:
        raise ConfigError("time step, end time and substep count must be positive")
    if abs(scn.t_end / scn.darcy_dt - scn.n_steps) > 1e-9:
        raise ConfigError("time.end must be a whole number of Darcy steps")
    return scn


def _boundary(spec, inflow):
    edges = {}
    for e in EDGES:
        if e not in spec:
            raise ConfigError(f"boundary: missing edge {e!r}")
        bc = spec[e]
        if not isinstance(bc, dict) or len(bc) != 1:
            raise ConfigError(f"boundary.{e}: give exactly one of 'pressure' or 'flux'")
        (kind, val), = bc.items()
        if kind == "pressure":
            edges[e] = EdgeBC("pressure", _q(val, "pressure", f"boundary.{e}"))
        elif kind == "flux":
            edges[e] = EdgeBC("flux", _q(val, "mass_flux", f"boundary.{e}"))
        else:
            raise ConfigError(f"boundary.{e}: unknown kind {kind!r}")
    return BoundaryConditions(edges, _inflow(inflow))


def _inflow(spec):
    out = {}
    for e, s in (spec or {}).items():
        if e not in EDGES:
            raise ConfigError(f"inflow: unknown edge {e!r}")
        out[e] = InflowSchedule(_q(s["value"], "concentration", f"inflow.{e}.value"),
                                _q(s.get("start", "0 day"), "time", f"inflow.{e}.start"),
                                _q(s["end"], "time", f"inflow.{e}.end") if "end" in s else np.inf)
    return out


def merge(base: dict, over: dict):
    """Recursive dict update returning a new dict."""
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


# ---------------------------------------------------------------- outputs

def field_filename(t_seconds):
    """``fields_T<t>.csv`` with t in days."""
    return f"fields_T{t_seconds / units.DAY:g}.csv"


def write_fields_csv(path, x, y, fields: dict):
    """Point-wise fields in field units: p in bar, q in kg/m2/day, u in m/day."""
    cols = list(FIELD_COLUMNS) + (["c"] if fields.get("c") is not None else [])
    scale = {"p": 1.0 / units.BAR, "qx": units.DAY, "qy": units.DAY,
             "ux": units.DAY, "uy": units.DAY, "c": 1.0}
    data = [np.ravel(x), np.ravel(y)] + [np.ravel(fields[k]) * scale[k] for k in cols[2:]]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in zip(*data):
            w.writerow([repr(float(v)) for v in row])


def read_fields_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path} is empty")
    head = rows[0]
    arr = np.array(rows[1:], dtype=float).reshape(-1, len(head))
    return {k: arr[:, i] for i, k in enumerate(head)}


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
