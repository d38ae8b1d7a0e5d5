import json
import os
import subprocess
import sys

import numpy as np
import pytest
import yaml
from hypothesis import given, strategies as st

from nbm import cli, units
from nbm.config import ConfigError, build_scenario, field_filename, read_fields_csv, write_fields_csv


SMALL = {"scenario": {"preset": "co2_homogeneous", "grid": [8, 8],
                      "time": {"end": "60 day", "darcy_dt": "30 day", "n_sub": 1}},
         "basis": {"nb": 60}}


def _write(tmp_path, data, name="c.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


def _leftovers(root):
    return [n for n in os.listdir(root) if n.startswith(".nbm-partial-")]


# ------------------------------------------------------------------ config

def test_custom_scenario_with_units():
    spec = {"grid": [4, 3], "domain": {"x": ["0 m", "1 km"], "y": ["0 m", "300 m"]},
            "fluid": {"mu": "1 cP", "c_f": "1e-5 1/bar", "rho0": "1000 kg/m3", "p0": "100 bar", "eps": "0.2"},
            "boundary": {"left": {"pressure": "120 bar"}, "right": {"pressure": "100 bar"},
                         "bottom": {"flux": "0 kg/m2/day"}, "top": {"flux": "0 kg/m2/day"}},
            "permeability": {"value": "250 mD"}, "initial": {"p": "100 bar"},
            "inflow": {"left": {"value": "1 ppm"}}, "time": {"end": "20 day", "darcy_dt": "10 day"}}
    scn = build_scenario(spec)
    assert scn.grid.x1 == 1000.0 and scn.grid.nx == 4
    assert scn.props.mu == pytest.approx(1e-3)
    assert scn.perm.mean == pytest.approx(0.25 * units.DARCY)
    assert scn.bcs.edges["left"].value == pytest.approx(120 * units.BAR)
    assert scn.n_steps == 2 and scn.bcs.tracer("left", 0.0) == 1.0


@pytest.mark.parametrize("bad", [
    {"preset": "co2_homogeneous", "time": {"end": 90}},
    {"preset": "co2_homogeneous", "time": {"end": "95 day", "darcy_dt": "30 day"}},
    {"preset": "nope"},
    {"preset": "co2_homogeneous", "grid": [10, 12]},
    {"grid": [4, 4], "domain": {"x": ["0 m", "1 m"], "y": ["0 m", "1 m"]}},
])
def test_invalid_scenarios_raise_config_error(bad):
    with pytest.raises(ConfigError):
        build_scenario(bad)


def test_fields_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    f = {k: rng.random(6) for k in ("p", "qx", "qy", "ux", "uy", "c")}
    path = tmp_path / field_filename(30 * units.DAY)
    assert path.name == "fields_T30.csv"
    write_fields_csv(path, np.arange(6.0), np.zeros(6), f)
    back = read_fields_csv(path)
    assert np.allclose(back["p"], f["p"] / units.BAR, rtol=1e-15)
    assert np.allclose(back["ux"], f["ux"] * units.DAY, rtol=1e-15)
    assert np.array_equal(back["c"], f["c"])


# --------------------------------------------------------------------- cli

def test_every_subcommand_is_registered():
    parser = cli.build_parser()
    for name in cli.SUBCOMMANDS:
        args = parser.parse_args([name])
        assert args.subcommand == name


def test_solve_coupled_and_replay_are_identical(tmp_path):
    cfg = _write(tmp_path, SMALL)
    assert cli.dispatch(["solve-coupled", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    files = sorted(os.listdir(tmp_path / "a"))
    assert files == ["diagnostics.json", "fields_T30.csv", "fields_T60.csv", "run_config.yaml"]
    replay = str(tmp_path / "a" / "run_config.yaml")
    assert cli.dispatch(["solve-coupled", "--config", replay, "--out", str(tmp_path / "b")]) == 0
    for f in ("fields_T30.csv", "fields_T60.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert "c" in read_fields_csv(tmp_path / "a" / "fields_T60.csv")
    assert not _leftovers(tmp_path)


def test_compare_identical_files_gives_zero_errors(tmp_path):
    cfg = _write(tmp_path, SMALL)
    assert cli.dispatch(["fvm-reference", "--config", cfg, "--out", str(tmp_path / "f")]) == 0
    f = str(tmp_path / "f" / "fields_T60.csv")
    assert cli.dispatch(["compare", f, f, "--out", str(tmp_path / "cmp")]) == 0
    m = json.loads((tmp_path / "cmp" / "metrics.json").read_text())
    assert all(v == 0.0 for v in m["rel_l2"].values())
    assert m["ks"] == 0.0


def test_nbm_and_fvm_agree_on_a_small_case(tmp_path):
    cfg = _write(tmp_path, SMALL)
    assert cli.dispatch(["solve-darcy", "--config", cfg, "--out", str(tmp_path / "n")]) == 0
    assert cli.dispatch(["fvm-reference", "--config", cfg, "--out", str(tmp_path / "f")]) == 0
    a = read_fields_csv(tmp_path / "n" / "fields_T60.csv")
    b = read_fields_csv(tmp_path / "f" / "fields_T60.csv")
    dp = np.linalg.norm(a["p"] - b["p"]) / np.linalg.norm(b["p"])
    assert dp < 1e-3


def test_gen_perm_writes_field_and_summary(tmp_path):
    assert cli.dispatch(["gen-perm", "--grid", "20", "20", "--seed", "5", "--out", str(tmp_path / "g")]) == 0
    s = json.loads((tmp_path / "g" / "perm_summary.json").read_text())
    assert s["seed"] == 5 and s["contrast"] > 1.0
    assert len((tmp_path / "g" / "perm.csv").read_text().splitlines()) == 401


def test_config_errors_exit_2_without_partial_outputs(tmp_path):
    bad = _write(tmp_path, {"scenario": {"preset": "co2_homogeneous", "time": {"end": 90}}})
    assert cli.dispatch(["solve-darcy", "--config", bad, "--out", str(tmp_path / "x")]) == 2
    assert cli.dispatch(["solve-darcy", "--bogus"]) == 2
    assert cli.dispatch(["compare", "--out", str(tmp_path / "y")]) == 2
    unknown = _write(tmp_path, {"scenery": {}}, "u.yaml")
    assert cli.dispatch(["solve-darcy", "--config", unknown]) == 2
    assert cli.dispatch(["solve-darcy", "--nb", "0"]) == 2
    assert not (tmp_path / "x").exists() and not (tmp_path / "y").exists()
    assert not _leftovers(tmp_path)


def test_numerical_failure_exits_3_and_cleans_up(tmp_path, monkeypatch):
    def boom(rc, out):
        with open(os.path.join(out, "half.csv"), "w") as fh:
            fh.write("x\n")
        raise np.linalg.LinAlgError("singular")
    monkeypatch.setitem(cli.COMMANDS, "solve-darcy", boom)
    cfg = _write(tmp_path, SMALL)
    assert cli.dispatch(["solve-darcy", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    assert not (tmp_path / "o").exists() and not _leftovers(tmp_path)


def test_console_script_runs(tmp_path):
    out = subprocess.run([sys.executable, "-m", "nbm.cli", "gen-perm", "--grid", "5", "5",
                          "--out", str(tmp_path / "g")], capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    bad = subprocess.run([sys.executable, "-m", "nbm.cli", "nope"], capture_output=True, text=True)
    assert bad.returncode == 2


@given(st.floats(-1e6, 1e6, allow_nan=False), st.sampled_from(["bar", "Pa", "psi"]))
def test_pressure_quantities_parse_to_pascal(v, unit):
    factor = {"bar": units.BAR, "Pa": 1.0, "psi": units.parse_quantity("1 psi", "pressure")}[unit]
    assert units.parse_quantity(f"{v!r} {unit}", "pressure") == pytest.approx(v * factor, rel=1e-12, abs=1e-300)


def test_unitless_physical_input_rejected():
    with pytest.raises(units.UnitError):
        units.parse_quantity("103.4", "pressure")
    with pytest.raises(units.UnitError):
        units.parse_quantity("3 furlong", "length")
    with pytest.raises(units.UnitError):
        units.parse_quantity("3 bar", "length")
