"""Command-line entry point.

Every subcommand reads an optional YAML config, applies the command-line
overrides, writes its outputs into a staging directory and moves them into
``--out`` only on success. The resolved configuration is saved as
``run_config.yaml`` next to the outputs; passing that file back through
``--config`` replays the run.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import csv
import logging
import os
import shutil
import sys
import tempfile
import time
from dataclasses import replace

import numpy as np

from . import units
from .basis import evaluate_basis, init_basis
from .config import (ConfigError, RunConfig, build_scenario, field_filename, load_yaml, merge,
                     read_fields_csv, write_fields_csv, write_json)
from .darcy import NbmDarcy, NbmDarcyConfig
from .geometry import Grid2D
from .metrics import field_metrics, rel_l2
from .problems import (GrfParams, build_manufactured_case, dykstra_parsons, gen_grf_permeability,
                       write_perm_csv)
from .simulate import conditioning_sweep, run_fvm, run_nbm
from .transport import NbmTransportConfig
from .vector_basis import project_scalar_field

log = logging.getLogger("nbm")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

SUBCOMMANDS = ("solve-darcy", "solve-coupled", "fvm-reference", "benchmark-manufactured", "gen-perm",
               "project-field", "conditioning-sweep", "ol-snapshots", "ol-train", "ol-infer", "compare")


class NumericalFailure(RuntimeError):
    pass


# ----------------------------------------------------------------- parsing

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config or a saved run_config.yaml")
    common.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, help="parallel workers for independent samples")
    common.add_argument("--nb", type=int, help="basis width per hidden layer")
    common.add_argument("--grid", type=int, nargs=2, metavar=("NX", "NY"))
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="nbm", description="Neural basis method solvers and tools.")
    sub = p.add_subparsers(dest="subcommand", required=True)
    helps = {
        "solve-darcy": "NBM mixed Darcy solve, fields per Darcy step",
        "solve-coupled": "NBM Darcy plus tracer transport",
        "fvm-reference": "TPFA / upwind finite-volume reference",
        "benchmark-manufactured": "NBM and FVM against the manufactured solution",
        "gen-perm": "log-normal Gaussian random permeability field",
        "project-field": "least-squares projection of a CSV column onto the basis",
        "conditioning-sweep": "condition numbers over basis width and depth",
        "ol-snapshots": "operator-learning snapshot generation",
        "ol-train": "train an operator-learning model on stored snapshots",
        "ol-infer": "evaluate a trained operator-learning model",
        "compare": "diff two field CSVs into metrics.json",
    }
    subs = {name: sub.add_parser(name, parents=[common], help=h) for name, h in helps.items()}
    subs["compare"].add_argument("a", nargs="?")
    subs["compare"].add_argument("b", nargs="?")
    subs["project-field"].add_argument("--field", help="fields CSV with x, y columns")
    subs["project-field"].add_argument("--column", help="column to project (default p)")
    subs["ol-train"].add_argument("--snapshots", help="snapshots.npz from ol-snapshots")
    subs["ol-infer"].add_argument("--model", help="model.npz from ol-train")
    subs["ol-infer"].add_argument("--dependency", help="Case-II model.npz needed by Case-III")
    subs["ol-infer"].add_argument("--params", type=float, nargs="+",
                                  help="parameter values (Case II: g_top; Case III: g_top c_left)")
    return p


def resolve(args) -> RunConfig:
    """Merge the config file with command-line overrides."""
    data = load_yaml(args.config) if args.config else {}
    base_dir = os.path.dirname(os.path.abspath(args.config)) if args.config else os.getcwd()
    if "subcommand" in data:
        rc = RunConfig.from_dict(data)
        if rc.subcommand != args.subcommand:
            raise ConfigError(f"run config is for {rc.subcommand!r}, not {args.subcommand!r}")
    else:
        unknown = set(data) - {"scenario", "basis", "solver", "options", "seed", "out"}
        if unknown:
            raise ConfigError(f"unknown config sections {sorted(unknown)}")
        rc = RunConfig(args.subcommand, data.get("scenario", {}), data.get("basis", {}),
                       data.get("solver", {}), data.get("out", "out"), int(data.get("seed", 0)),
                       options=data.get("options", {}))
    rc.config_path = os.path.abspath(args.config) if args.config else None
    over = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        rc.seed = over["seed"] = args.seed
    if args.out is not None:
        rc.out = args.out
    if args.nb is not None:
        if args.nb < 1:
            raise ConfigError("--nb must be positive")
        rc.basis = merge(rc.basis, {"nb": args.nb})
        over["nb"] = args.nb
    if args.grid is not None:
        rc.scenario = merge(rc.scenario, {"grid": list(args.grid)})
        over["grid"] = list(args.grid)
    if args.jobs is not None:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        rc.options = merge(rc.options, {"jobs": args.jobs})
    extra = {}
    for key in ("a", "b", "field", "column", "snapshots", "model", "dependency"):
        val = getattr(args, key, None)
        if val is not None:
            extra[key] = os.path.abspath(val) if key not in ("column",) else val
    if getattr(args, "params", None) is not None:
        extra["params"] = list(args.params)
    rc.options = merge(rc.options, extra)
    # file references inside the scenario resolve against the config location
    perm = rc.scenario.get("permeability", {})
    if "csv" in perm and not os.path.isabs(perm["csv"]):
        rc.scenario = merge(rc.scenario, {"permeability": {"csv": os.path.join(base_dir, perm["csv"])}})
    rc.overrides = merge(rc.overrides, over)
    return rc


# ------------------------------------------------------------ config bits

def _darcy_config(rc: RunConfig) -> NbmDarcyConfig:
    b, s = rc.basis, rc.solver
    known_b = {"nb", "layers", "seed_p", "seed_q", "seed_c", "deep_shape_factor", "shape_factors"}
    known_s = {"picard_tol", "picard_max", "weighting", "kappa_mean", "flux_parts", "face_velocity"}
    if set(b) - known_b:
        raise ConfigError(f"unknown basis keys {sorted(set(b) - known_b)}")
    if set(s) - known_s:
        raise ConfigError(f"unknown solver keys {sorted(set(s) - known_s)}")
    kw = {}
    if "shape_factors" in b:
        kw["shape_factors"] = [float(a) for a in b["shape_factors"]]
    cfg = NbmDarcyConfig(nb=int(b.get("nb", 1000)), n_layers=int(b.get("layers", 2)),
                         seed_p=int(b.get("seed_p", 11 + rc.seed)), seed_q=int(b.get("seed_q", 23 + rc.seed)),
                         flux_parts=tuple(s.get("flux_parts", ("div", "curl"))),
                         weighting=s.get("weighting", "energy"), kappa_mean=s.get("kappa_mean", "arithmetic"),
                         picard_tol=float(s.get("picard_tol", 1e-8)), picard_max=int(s.get("picard_max", 50)),
                         deep_shape_factor=float(b.get("deep_shape_factor", 0.3)), basis_kwargs=kw)
    if cfg.weighting not in ("energy", "none"):
        raise ConfigError(f"solver.weighting must be 'energy' or 'none', got {cfg.weighting!r}")
    return cfg


def _transport_config(rc: RunConfig) -> NbmTransportConfig:
    b = rc.basis
    return NbmTransportConfig(nb=int(b.get("nb", 1000)), n_layers=int(b.get("layers", 2)),
                              seed=int(b.get("seed_c", 37 + rc.seed)),
                              deep_shape_factor=float(b.get("deep_shape_factor", 0.3)),
                              face_velocity=rc.solver.get("face_velocity", "bc"))


def _scenario(rc: RunConfig):
    spec = rc.scenario or {"preset": "co2_homogeneous"}
    try:
        return build_scenario(spec, os.path.dirname(rc.config_path) if rc.config_path else ".")
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"scenario: missing or malformed entry {exc}") from exc


def _option_quantity(opts, key, dim, default):
    return units.parse_quantity(opts.get(key, default), dim)


def _cell_xy(grid: Grid2D):
    X, Y = np.meshgrid(grid.xc(), grid.yc())
    return X.ravel(), Y.ravel()


def _check_finite(**fields):
    for k, v in fields.items():
        if v is not None and not np.all(np.isfinite(v)):
            raise NumericalFailure(f"non-finite values in {k}")


def _write_snapshots(out, grid, snaps):
    x, y = _cell_xy(grid)
    for s in snaps:
        _check_finite(p=s.p, ux=s.ux, uy=s.uy, c=s.c)
        write_fields_csv(os.path.join(out, field_filename(s.time)), x, y,
                         {"p": s.p, "qx": s.qx, "qy": s.qy, "ux": s.ux, "uy": s.uy, "c": s.c})


# --------------------------------------------------------------- commands

def cmd_solve(rc: RunConfig, out):
    scn = _scenario(rc)
    coupled = rc.subcommand == "solve-coupled"
    snaps = run_nbm(scn, _darcy_config(rc), _transport_config(rc) if coupled else None, transport=coupled)
    _write_snapshots(out, scn.grid, snaps)
    diag = {"scenario": scn.name, "times_day": [s.time / units.DAY for s in snaps]}
    for key in ("e_rel", "picard_iterations", "converged", "cond_estimate", "seconds"):
        diag[key] = [s.info[key] for s in snaps]
    if coupled:
        diag["transport_e_rel"] = [s.info["transport_e_rel"] for s in snaps]
    diag["setup_seconds"] = snaps[0].info.get("setup_seconds")
    write_json(os.path.join(out, "diagnostics.json"), diag)


def cmd_fvm(rc: RunConfig, out):
    scn = _scenario(rc)
    solver = rc.solver.get("linear_solver", "direct") if "linear_solver" in rc.solver else "direct"
    snaps = run_fvm(scn, transport=bool(rc.options.get("transport", True)), solver=solver)
    _write_snapshots(out, scn.grid, snaps)
    write_json(os.path.join(out, "diagnostics.json"),
               {"scenario": scn.name, "times_day": [s.time / units.DAY for s in snaps],
                "picard_iterations": [s.info["picard_iterations"] for s in snaps],
                "converged": [s.info["converged"] for s in snaps],
                "seconds": [s.info["seconds"] for s in snaps]})


def cmd_manufactured(rc: RunConfig, out):
    from .fvm import FvmGrid, reconstruct_cell_velocity
    opts = rc.options
    nx, ny = rc.scenario.get("grid", (50, 50))
    mc = build_manufactured_case(Cx=float(opts.get("Cx", 200.0)), Cy=float(opts.get("Cy", 20.0)),
                                 grid=Grid2D(-1.0, 1.0, -1.0, 1.0, int(nx), int(ny)))
    scn = mc.scenario()
    g = scn.grid
    X, Y = np.meshgrid(g.xc(), g.yc())
    ref = {"p": mc.pressure(X, Y)}
    ref["ux"], ref["uy"] = mc.velocity(X, Y)
    fg = FvmGrid(g, scn.perm, scn.props, scn.bcs)
    st = fg.step(np.full((g.ny, g.nx), scn.p_init), np.inf, 0.0)
    fux, fuy = reconstruct_cell_velocity(g, st)
    fvm = {"p": st.p, "ux": fux, "uy": fuy}
    base = _darcy_config(rc)
    runs = []
    for s in range(int(opts.get("n_seeds", 3))):
        cfg = replace(base, seed_p=base.seed_p + 1000 * s, seed_q=base.seed_q + 1000 * s)
        solver = NbmDarcy(g, scn.perm, scn.props, scn.bcs, cfg)
        d = solver.advance(solver.initial_state(scn.p_init), np.inf)
        pred = {"p": d.p.reshape(g.ny, g.nx), "ux": d.u[:, 0].reshape(g.ny, g.nx),
                "uy": d.u[:, 1].reshape(g.ny, g.nx)}
        _check_finite(**pred)
        runs.append({k: rel_l2(pred[k], ref[k]) for k in ref} | {"e_rel": d.e_rel, "seed_p": cfg.seed_p})
    payload = {"nbm": runs, "fvm": {k: rel_l2(fvm[k], ref[k]) for k in ref},
               "nbm_median": {k: float(np.median([r[k] for r in runs])) for k in ref},
               "permeability_contrast": scn.perm.contrast}
    write_json(os.path.join(out, "metrics.json"), payload)


def cmd_gen_perm(rc: RunConfig, out):
    o = rc.options
    nx, ny = rc.scenario.get("grid", (50, 50))
    L = units.parse_quantity(o.get("length", "762 m"), "length")
    grid = Grid2D(0.0, L, 0.0, L, int(nx), int(ny))
    try:
        prm = GrfParams(v=float(o.get("v", 0.5)), lx=units.parse_quantity(o.get("lx", "150 m"), "length"),
                        ly=units.parse_quantity(o.get("ly", "80 m"), "length"),
                        theta=units.parse_quantity(o.get("theta", "0 deg"), "angle"),
                        k_avg=units.parse_quantity(o.get("k_avg", "0.3 D"), "permeability"), seed=rc.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    perm = gen_grf_permeability(prm, grid)
    with open(os.path.join(out, "perm.csv"), "w") as fh:
        write_perm_csv(fh, perm)
    write_json(os.path.join(out, "perm_summary.json"),
               {"contrast": perm.contrast, "dykstra_parsons": dykstra_parsons(perm.values),
                "mean_darcy": perm.mean / units.DARCY, "seed": rc.seed})


def cmd_project(rc: RunConfig, out):
    path = rc.options.get("field")
    if not path:
        raise ConfigError("project-field needs --field")
    col = rc.options.get("column", "p")
    data = read_fields_csv(path)
    if col not in data:
        raise ConfigError(f"column {col!r} not in {path}")
    pts = np.column_stack([data["x"], data["y"]])
    box = (pts[:, 0].min(), pts[:, 0].max(), pts[:, 1].min(), pts[:, 1].max())
    cfg = _darcy_config(rc)
    basis = init_basis(cfg.basis_config(box, cfg.seed_p, True))
    Phi = evaluate_basis(basis, pts, "values").values
    theta, err = project_scalar_field(Phi, data[col])
    _check_finite(theta=theta)
    with open(os.path.join(out, "projection.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", col, f"{col}_proj"])
        for row in zip(data["x"], data["y"], data[col], Phi @ theta):
            w.writerow([repr(float(v)) for v in row])
    write_json(os.path.join(out, "metrics.json"), {"rel_l2": {col: err}, "nb": cfg.nb})


def cmd_conditioning(rc: RunConfig, out):
    o = rc.options
    scn = _scenario(rc)
    rows = conditioning_sweep(scn, nbs=tuple(o.get("nbs", (200, 400, 600, 800, 1000))),
                              layers=tuple(o.get("layers", (1, 2))),
                              seeds=tuple(range(int(o.get("n_seeds", 1)))), base=_darcy_config(rc))
    with open(os.path.join(out, "conditioning.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, ["nb", "n_layers", "seed", "cond"], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def _ol_case(rc: RunConfig):
    from .operator_learning import OlCase
    o = rc.options
    nx = rc.scenario.get("grid", (o.get("n", 100),) * 2)
    kw = {"case": str(o.get("case", "II")), "n": int(nx[0]), "nb": int(rc.basis.get("nb", 800)),
          "n_steps": int(o.get("n_steps", 20))}
    if "darcy_dt" in o:
        kw["darcy_dt"] = units.parse_quantity(o["darcy_dt"], "time")
    if "g_range" in o:
        kw["g_range"] = tuple(units.parse_quantity(v, "mass_flux") * units.DAY for v in o["g_range"])
    if "c_range" in o:
        kw["c_range"] = tuple(units.parse_quantity(v, "concentration") for v in o["c_range"])
    if "ranks" in o:
        kw["ranks"] = {k: int(v) for k, v in o["ranks"].items()}
    try:
        return OlCase(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_ol_snapshots(rc: RunConfig, out):
    from .operator_learning import OperatorModel, generate_snapshots
    oc = _ol_case(rc)
    dep = None
    if oc.case == "III":
        if "dependency" not in rc.options:
            raise ConfigError("Case-III snapshots need options.dependency (a Case-II model)")
        dep = OperatorModel.load(rc.options["dependency"])
    store = generate_snapshots(oc, int(rc.options.get("n_samples", 50)), rc.seed,
                               jobs=int(rc.options.get("jobs", 1)), case2_model=dep)
    if len(store.params) == 0:
        raise NumericalFailure("every sample was excluded")
    store.save(os.path.join(out, "snapshots.npz"))
    write_json(os.path.join(out, "diagnostics.json"),
               {"case": oc.to_dict(), "n_kept": len(store.params), "excluded": store.excluded})


def cmd_ol_train(rc: RunConfig, out):
    from .operator_learning import (OperatorModel, SnapshotStore, TrainConfig, build_latent_spec,
                                    darcy_reduced_residuals, default_train_config, train_operator,
                                    transport_reduced_residuals)
    path = rc.options.get("snapshots")
    if not path:
        raise ConfigError("ol-train needs --snapshots")
    store = SnapshotStore.load(path)
    oc = _ol_case(replace(rc, options=merge(rc.options, {"case": store.case})))
    latent = build_latent_spec(store, oc.ranks)
    dep = None
    if oc.case == "III":
        residuals = transport_reduced_residuals(oc, store, latent)
        if "dependency" in rc.options:
            dep = OperatorModel.load(rc.options["dependency"])
    else:
        residuals = darcy_reduced_residuals(oc, store, latent)
    tc = default_train_config(oc.case)
    t = rc.options.get("train", {})
    known = set(TrainConfig.__dataclass_fields__)
    if set(t) - known:
        raise ConfigError(f"unknown train keys {sorted(set(t) - known)}")
    tc = replace(tc, seed=rc.seed, **t)
    model, hist = train_operator(oc, store, latent, residuals, tc,
                                 log_path=os.path.join(out, "train_log.csv"), dependency=dep)
    model.save(os.path.join(out, "model.npz"))
    write_json(os.path.join(out, "diagnostics.json"),
               {"final_e_rel": hist[-1]["e_rel"], "floor": hist[-1]["floor"],
                "train_seconds": model.meta.get("train_seconds")})


def cmd_ol_infer(rc: RunConfig, out):
    from .operator_learning import FieldEvaluator, OperatorModel, infer_operator, scn_times
    if "model" not in rc.options:
        raise ConfigError("ol-infer needs --model")
    dep = OperatorModel.load(rc.options["dependency"]) if "dependency" in rc.options else None
    model = OperatorModel.load(rc.options["model"], dependency=dep)
    params = rc.options.get("params")
    if params is None or len(params) != len(model.in_lo):
        raise ConfigError(f"--params needs {len(model.in_lo)} value(s)")
    oc = model.case
    times = scn_times(oc, int(rc.options.get("n_steps", oc.n_steps))) if oc.case != "I" else np.array([np.inf])
    pred = infer_operator(model, params, times)
    t0 = time.perf_counter()
    ev = FieldEvaluator(model)
    f = ev.trajectory(params, times)
    seconds = time.perf_counter() - t0
    x, y = _cell_xy(oc.grid)
    if oc.case == "III":
        vel = FieldEvaluator(dep).trajectory(params[:1], times[oc.n_sub - 1::oc.n_sub])
        for k, t in enumerate(times):
            n = min(k // oc.n_sub, vel["p"].shape[0] - 1)
            flds = {key: vel[key][n] for key in ("p", "qx", "qy", "ux", "uy")}
            flds["c"] = f["c"][k]
            _check_finite(**flds)
            write_fields_csv(os.path.join(out, field_filename(t)), x, y, flds)
    else:
        for k, t in enumerate(times):
            flds = {key: f[key][k] for key in ("p", "qx", "qy", "ux", "uy")}
            _check_finite(**flds)
            write_fields_csv(os.path.join(out, field_filename(t if np.isfinite(t) else 0.0)), x, y, flds)
    write_json(os.path.join(out, "inference.json"),
               {"extrapolation": bool(pred["extrapolation"]), "params": list(params),
                "times_day": [float(t / units.DAY) for t in times], "seconds": seconds})


def _grid_arrays(data):
    """Reshape CSV columns onto their (ny, nx) grid when the points form one."""
    xs, ys = np.unique(data["x"]), np.unique(data["y"])
    if xs.size * ys.size != data["x"].size:
        return None
    order = np.lexsort((data["x"], data["y"]))
    return {k: v[order].reshape(ys.size, xs.size) for k, v in data.items()}


def cmd_compare(rc: RunConfig, out):
    a, b = rc.options.get("a"), rc.options.get("b")
    if not a or not b:
        raise ConfigError("compare needs two field CSV paths")
    da, db = read_fields_csv(a), read_fields_csv(b)
    if da["x"].shape != db["x"].shape or not (np.allclose(da["x"], db["x"]) and np.allclose(da["y"], db["y"])):
        raise ConfigError("the two files do not share the same points")
    ga, gb = _grid_arrays(da), _grid_arrays(db)
    if ga is not None and gb is not None:
        da, db = ga, gb
    keys = [k for k in ("p", "qx", "qy", "ux", "uy", "c") if k in da and k in db]
    payload = field_metrics(da, db, keys)
    if ga is None and "ks" in payload:
        payload.pop("spectral_error")
    write_json(os.path.join(out, "metrics.json"), payload)


COMMANDS = {"solve-darcy": cmd_solve, "solve-coupled": cmd_solve, "fvm-reference": cmd_fvm,
            "benchmark-manufactured": cmd_manufactured, "gen-perm": cmd_gen_perm,
            "project-field": cmd_project, "conditioning-sweep": cmd_conditioning,
            "ol-snapshots": cmd_ol_snapshots, "ol-train": cmd_ol_train, "ol-infer": cmd_ol_infer,
            "compare": cmd_compare}


# ---------------------------------------------------------------- driver

def _publish(staging, out):
    os.makedirs(out, exist_ok=True)
    for name in os.listdir(staging):
        os.replace(os.path.join(staging, name), os.path.join(out, name))


def dispatch(argv=None):
    """Run one subcommand; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = resolve(args)
    except (ConfigError, units.UnitError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = os.path.abspath(rc.out)
    parent = os.path.dirname(out) or "."
    try:
        os.makedirs(parent, exist_ok=True)
        staging = tempfile.mkdtemp(prefix=".nbm-partial-", dir=parent)
    except OSError as exc:
        print(f"config error: cannot create output directory: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rc.save(os.path.join(staging, "run_config.yaml"))
        with np.errstate(over="raise", invalid="raise", divide="ignore"):
            COMMANDS[rc.subcommand](rc, staging)
    except (ConfigError, units.UnitError, FileNotFoundError, KeyError) as exc:
        shutil.rmtree(staging, ignore_errors=True)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:                     # numerical and solver failures
        shutil.rmtree(staging, ignore_errors=True)
        kind = type(exc).__name__
        # LinAlgError subclasses ValueError but is a numerical failure
        if isinstance(exc, ValueError) and not isinstance(exc, np.linalg.LinAlgError):
            print(f"config error: {kind}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"numerical failure: {kind}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    _publish(staging, out)
    os.rmdir(staging)
    return EXIT_OK


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
