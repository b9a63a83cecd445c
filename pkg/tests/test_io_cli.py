import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ambload import cli, io
from ambload.analysis import LANDSCAPE_SENTINEL
from ambload.model import IMParamsPhysical, IMParamsTransformed, MeasurementSeries, ZIPParams
from ambload.simulate import CompositeLoad


def _run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    assert _run("simulate", "--seed", 7, "--out", d / "case.csv") == 0
    return d


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    n = 50
    s = MeasurementSeries(0.01 * np.arange(n), 1 + 0.01 * rng.standard_normal(n),
                          rng.standard_normal(n), rng.standard_normal(n), rng.standard_normal(n))
    io.write_series_csv(s, tmp_path / "x.csv")
    back = io.read_series_csv(tmp_path / "x.csv")
    for ch in ("t", "V", "theta", "P", "Q"):
        assert np.array_equal(getattr(back, ch), getattr(s, ch))
    assert (tmp_path / "x.csv").read_text().splitlines()[0] == "t,v,theta,p,q"


@settings(max_examples=30, deadline=None)
@given(vals=st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=3, max_size=3))
def test_csv_round_trip_values(tmp_path_factory, vals):
    path = tmp_path_factory.mktemp("rt") / "x.csv"
    s = MeasurementSeries(np.array([0.0, 0.01]), np.array([1.0, 1.0]), np.array([vals[0]] * 2),
                          np.array([vals[1]] * 2), np.array([vals[2]] * 2))
    io.write_series_csv(s, path)
    back = io.read_series_csv(path)
    assert back.theta[0] == vals[0] and back.P[0] == vals[1] and back.Q[0] == vals[2]


@pytest.mark.parametrize("text,where", [
    ("t,v,theta,p\n0,1,0,1\n", "header"),
    ("t,v,theta,p,q\n0,1,0,1,1\n0.01,1,0,abc,1\n", "row 3"),
    ("t,v,theta,p,q\n0,1,0,1,1\n0.01,1,0,1\n", "row 3"),
])
def test_csv_schema_errors(tmp_path, text, where):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(io.SchemaError, match=where):
        io.read_series_csv(path)


def test_parameter_json_round_trip(tmp_path):
    load = CompositeLoad(IMParamsTransformed(40, 12, 1.5, 0.5), ZIPParams(1, 2, 3, 4, 5, 6))
    io.write_json(io.load_to_dict(load), tmp_path / "l.json")
    assert io.load_from_dict(io.read_json(tmp_path / "l.json")) == load
    phys = IMParamsPhysical(3.0, 0.2, 1.0, 1.0, 0.5)
    assert set(io.motor_to_dict(phys)) == {"x", "xp", "td0", "h2", "tm"}
    assert io.motor_from_dict(io.motor_to_dict(phys)) == phys
    assert set(io.motor_to_dict(load.motor)) == {"a", "b", "h2", "tm"}
    with pytest.raises(io.SchemaError):
        io.motor_from_dict({"a": 1, "b": 2})


def test_simulate_outputs(sim):
    lines = (sim / "case.csv").read_text().splitlines()
    assert lines[0] == "t,v,theta,p,q" and len(lines) == 1002
    truth = io.read_json(sim / "case.json")
    load = io.load_from_dict(truth)
    assert truth["seeds"]["seed"] == 7 and truth["snr_db"] is None
    io.write_json(truth, sim / "again.json")
    assert io.read_json(sim / "again.json") == truth
    assert isinstance(load.motor, IMParamsTransformed)


def test_simulate_is_byte_identical(sim, tmp_path):
    assert _run("simulate", "--seed", 7, "--out", tmp_path / "case.csv") == 0
    assert (tmp_path / "case.csv").read_bytes() == (sim / "case.csv").read_bytes()
    assert (tmp_path / "case.json").read_bytes() == (sim / "case.json").read_bytes()
    assert _run("simulate", "--seed", 8, "--out", tmp_path / "other.csv") == 0
    assert (tmp_path / "other.csv").read_bytes() != (sim / "case.csv").read_bytes()


def test_identify_round_trip_and_filter_neutrality(sim, tmp_path):
    truth = io.load_from_dict(io.read_json(sim / "case.json")).motor.as_array()
    assert _run("identify", "--data", sim / "case.csv", "--seed", 1, "--out", tmp_path / "f.json") == 0
    assert _run("identify", "--data", sim / "case.csv", "--seed", 1, "--no-filter",
                "--out", tmp_path / "n.json") == 0
    f = io.read_json(tmp_path / "f.json")
    n = io.read_json(tmp_path / "n.json")
    df = io.motor_to_dict(io.motor_from_dict(f["d_opt"])).values()
    dn = io.motor_to_dict(io.motor_from_dict(n["d_opt"])).values()
    assert np.all(np.abs(np.array(list(df)) / truth - 1) < 0.01)
    assert np.all(np.abs(np.array(list(df)) / np.array(list(dn)) - 1) < 0.005)
    assert f["timing_s"] > 0 and f["window"]["filter_hz"] == 2.0
    assert n["window"]["filter_hz"] is None and len(f["starts"]) == 3


def test_identify_omit_timing_is_byte_identical(sim, tmp_path):
    for name in ("a.json", "b.json"):
        assert _run("identify", "--data", sim / "case.csv", "--seed", 2, "--no-filter", "--omit-timing",
                    "--out", tmp_path / name) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert "timing_s" not in io.read_json(tmp_path / "a.json")


def test_validate_identical_models(sim, tmp_path):
    assert _run("validate", "--actual", sim / "case.json", "--identified", sim / "case.json",
                "--seed", 0, "--out", tmp_path / "v.json") == 0
    assert io.read_json(tmp_path / "v.json")["fd"] == 1.0


def test_qconvex_and_reliability(sim, tmp_path, capsys):
    assert _run("qconvex", "--data", sim / "case.csv", "--seed", 0, "--pairs", 0,
                "--out", tmp_path / "q.json") == 2
    assert "pairs" in capsys.readouterr().err
    assert _run("qconvex", "--data", sim / "case.csv", "--seed", 0, "--pairs", 20, "--no-filter",
                "--out", tmp_path / "q.json") == 0
    rep = io.read_json(tmp_path / "q.json")
    assert rep["n_pairs"] == 20 and 0 <= rep["sp"] <= 100
    assert _run("reliability", "--data", sim / "case.csv", "--seed", 0, "--starts", 3, "--no-filter",
                "--out", tmp_path / "r.json") == 0
    rep = io.read_json(tmp_path / "r.json")
    assert len(rep["distances"]) == 3 and rep["sp"] > 0


def test_landscape_shape(sim, tmp_path):
    assert _run("landscape", "--data", sim / "case.csv", "--center", sim / "case.json", "--seed", 0,
                "--no-filter", "--k1=-1:1:101", "--k2=-1:1:101", "--out", tmp_path / "g.csv") == 0
    header, values = io.read_landscape_csv(tmp_path / "g.csv")
    assert values.shape == (101, 101)
    assert header.startswith("# center=") and "k1=-1:1:101" in header
    assert np.unravel_index(np.argmin(values), values.shape) == (50, 50)
    assert np.all(values <= LANDSCAPE_SENTINEL)


def test_parse_grid():
    assert cli.parse_grid("-1:1:5").tolist() == [-1, -0.5, 0, 0.5, 1]
    for bad in ("1:2", "a:b:c", "1:0:5", "0:1:0"):
        with pytest.raises(cli.UsageError):
            cli.parse_grid(bad)


def test_config_file_and_override(sim, tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 3, "snr": 20.0, "offset_fraction": 0.0}))
    assert _run("simulate", "--config", cfg, "--out", tmp_path / "a.csv") == 0
    assert io.read_json(tmp_path / "a.json")["seeds"]["seed"] == 3
    assert _run("simulate", "--config", cfg, "--seed", 4, "--out", tmp_path / "b.csv") == 0
    t = io.read_json(tmp_path / "b.json")
    assert t["seeds"]["seed"] == 4 and t["snr_db"] == pytest.approx(20.0, abs=0.5)
    cfg.write_text(json.dumps({"seed": 3, "colour": "blue"}))
    assert _run("simulate", "--config", cfg, "--out", tmp_path / "c.csv") == 2
    assert "colour" in capsys.readouterr().err


def test_exit_codes(sim, tmp_path, capsys):
    assert _run("simulate", "--out", tmp_path / "x.csv") == 2  # no seed
    assert _run("identify", "--data", tmp_path / "missing.csv", "--seed", 0, "--out", tmp_path / "r.json") == 4
    assert _run("simulate", "--seed", 1, "--out", tmp_path / "nodir" / "x.csv") == 4
    bad = tmp_path / "overload.json"
    io.write_json({"motor": {"a": 10, "b": 30, "h2": 1, "tm": 5}, "zip": io.zip_to_dict(ZIPParams())}, bad)
    assert _run("simulate", "--seed", 1, "--load", bad, "--out", tmp_path / "y.csv") == 3
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 2
    capsys.readouterr()


def test_help_lists_commands(capsys):
    with pytest.raises(SystemExit):
        cli.main(["--help"])
    out = capsys.readouterr().out
    for cmd in ("simulate", "identify", "validate", "qconvex", "reliability", "landscape"):
        assert cmd in out
