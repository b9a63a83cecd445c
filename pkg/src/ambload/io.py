"""File formats: measurement CSV and flat parameter JSON."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError
from .model import IMParamsPhysical, IMParamsTransformed, MeasurementSeries, ZIPParams
from .simulate import CompositeLoad

CSV_COLUMNS = ("t", "v", "theta", "p", "q")
MOTOR_KEYS = ("a", "b", "h2", "tm")
PHYSICAL_KEYS = ("x", "xp", "td0", "h2", "tm")
ZIP_KEYS = ("pz", "pi", "pp", "qz", "qi", "qp")


class SchemaError(DomainError):
    """Input file does not follow the expected layout."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_series_csv(series: MeasurementSeries, path) -> None:
    cols = (series.t, series.V, series.theta, series.P, series.Q)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in zip(*cols):
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def read_series_csv(path) -> MeasurementSeries:
    """Parse a ``t,v,theta,p,q`` file; errors name the offending row and column."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        header = [h.strip().lower() for h in header]
        if tuple(header) != CSV_COLUMNS:
            raise SchemaError(f"{path}: header must be {','.join(CSV_COLUMNS)}, got {','.join(header)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_COLUMNS):
                raise SchemaError(f"{path}: row {lineno} has {len(row)} fields, expected {len(CSV_COLUMNS)}")
            vals = []
            for name, cell in zip(CSV_COLUMNS, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise SchemaError(f"{path}: row {lineno}, column {name!r}: "
                                      f"cannot parse {cell!r} as a number") from None
                if not math.isfinite(v):
                    raise SchemaError(f"{path}: row {lineno}, column {name!r}: non-finite value")
                vals.append(v)
            rows.append(vals)
    if len(rows) < 2:
        raise SchemaError(f"{path}: need at least two samples")
    a = np.array(rows)
    series = MeasurementSeries(*(a[:, k].copy() for k in range(5)))
    try:
        series.validate()
    except DomainError as exc:
        raise SchemaError(f"{path}: {exc}") from None
    return series


def motor_to_dict(m) -> dict:
    if isinstance(m, IMParamsPhysical):
        return dict(zip(PHYSICAL_KEYS, map(float, (m.X, m.Xp, m.Td0, m.H2, m.Tm))))
    return dict(zip(MOTOR_KEYS, map(float, m.as_array())))


def motor_from_dict(obj: dict):
    keys = set(obj)
    if keys >= set(PHYSICAL_KEYS) and "a" not in keys:
        return IMParamsPhysical(*(float(obj[k]) for k in PHYSICAL_KEYS))
    missing = [k for k in MOTOR_KEYS if k not in obj]
    if missing:
        raise SchemaError(f"motor parameters lack keys {missing}")
    return IMParamsTransformed(*(float(obj[k]) for k in MOTOR_KEYS))


def zip_to_dict(z: ZIPParams) -> dict:
    return dict(zip(ZIP_KEYS, map(float, (z.Pz, z.Pi, z.Pp, z.Qz, z.Qi, z.Qp))))


def zip_from_dict(obj: dict) -> ZIPParams:
    missing = [k for k in ZIP_KEYS if k not in obj]
    if missing:
        raise SchemaError(f"ZIP parameters lack keys {missing}")
    return ZIPParams(*(float(obj[k]) for k in ZIP_KEYS))


def load_to_dict(load: CompositeLoad) -> dict:
    return {"motor": motor_to_dict(load.motor), "zip": zip_to_dict(load.zip)}


def load_from_dict(obj: dict) -> CompositeLoad:
    """Accepts ``{"motor", "zip"}``, a truth file (``"load"``) or an
    identification result (``"d_opt"``, ``"os_opt"``)."""
    if "load" in obj:
        obj = obj["load"]
    if "d_opt" in obj:
        return CompositeLoad(motor_from_dict(obj["d_opt"]), zip_from_dict(obj["os_opt"]))
    if "motor" not in obj or "zip" not in obj:
        raise SchemaError("load file needs 'motor' and 'zip' objects")
    return CompositeLoad(motor_from_dict(obj["motor"]), zip_from_dict(obj["zip"]))


def motor_from_any(obj: dict):
    """Motor parameters from a flat object, a load file or a result file."""
    if "d_opt" in obj:
        return motor_from_dict(obj["d_opt"])
    if "load" in obj or "motor" in obj:
        return load_from_dict(obj).motor
    return motor_from_dict(obj)


def _plain(x):
    if is_dataclass(x) and not isinstance(x, type):
        return {k: _plain(v) for k, v in asdict(x).items()}
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None


def write_landscape_csv(grid, path) -> None:
    """Matrix of ``values``: one row per ``k1``, one column per ``k2``. The
    single header line records the anchors and the grid."""
    def vec(d):
        return "[" + " ".join(_fmt(v) for v in d.as_array()) + "]"

    def spec(k):
        return f"{_fmt(k[0])}:{_fmt(k[-1])}:{len(k)}"

    header = (f"# center={vec(grid.d_center)} d1={vec(grid.d1)} d2={vec(grid.d2)} "
              f"k1={spec(grid.k1)} k2={spec(grid.k2)} rows=k1 cols=k2")
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for row in grid.values:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_landscape_csv(path):
    """``(header, values)`` from :func:`write_landscape_csv` output."""
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
    values = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    return header, values


def result_to_dict(res, timing: bool = True) -> dict:
    """JSON layout of an identification result with per-start diagnostics."""
    names = MOTOR_KEYS
    out = {
        "d_opt": motor_to_dict(res.d_opt),
        "os_opt": zip_to_dict(res.os_opt),
        "of_opt": float(res.of_opt),
        "starts": [
            {"index": r.index, "x0": dict(zip(names, map(float, r.x0))),
             "x": dict(zip(names, map(float, r.x))), "of": float(r.of),
             "iterations": r.iterations, "n_evals": r.n_evals,
             "converged": bool(r.converged), "message": r.message}
            for r in res.starts
        ],
        "best_so_far": [float(v) for v in res.best_so_far],
        "window": _plain(res.window_meta),
    }
    if timing:
        out["timing_s"] = float(res.timing_s)
    return out
