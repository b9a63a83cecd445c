"""Command-line workflows: simulate, identify, validate and the analysis
harnesses. Every command reads an optional JSON ``--config`` whose keys are
the long option names (dashes or underscores); flags on the command line
override it."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .analysis import (
    landscape_slice,
    quasiconvexity_test,
    reliability_test,
    validate_identified,
)
from .cases import make_case
from .errors import AmbLoadError, DomainError
from .model import IMParamsTransformed, SystemConfig
from .optimize import SolverOptions, feasible_region_from_data, minimize, sample_feasible
from .regression import Objective, WindowPolicy
from .signals import AmbientSpec, FaultSpec, estimate_snr_db

log = logging.getLogger("ambload")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

DEFAULTS = {
    "simulate": dict(level=1, snr=None, input_margin=math.inf, offset_fraction=0.001,
                     duration=10.0, dt=0.01, v_mean=1.0, theta_mean=0.1, noise_std=0.03,
                     cutoff=2.0, angle_ratio=0.5, load=None, truth=None),
    "identify": dict(starts=3, max_iters=200, no_filter=False, filter_hz=2.0, fit_start=3.0,
                     fit_end=10.0, warmup=1.0, literal_stability=False, omit_timing=False),
    "validate": dict(duration=5.0, dt=0.01, level=1, t_fault=1.0, t_clear=1.1, v_sag=0.8,
                     tau=0.2, v_mean=1.0, theta_mean=0.1, noise_std=0.03, cutoff=2.0,
                     angle_ratio=0.5),
    "qconvex": dict(pairs=1000),
    "reliability": dict(starts=100, max_iters=200, omit_timing=False),
    "landscape": dict(d1=None, d2=None, k1="-1:1:41", k2="-1:1:41"),
}
for _cmd in ("qconvex", "reliability", "landscape"):
    DEFAULTS[_cmd].update({k: DEFAULTS["identify"][k] for k in (
        "no_filter", "filter_hz", "fit_start", "fit_end", "warmup", "literal_stability")})
STOCHASTIC = {"simulate", "identify", "validate", "qconvex", "reliability"}


class UsageError(DomainError):
    pass


def _window_args(p):
    g = p.add_argument_group("window and preprocessing")
    g.add_argument("--no-filter", action="store_const", const=True, default=None,
                   help="skip the zero-phase low-pass on measurements and predictions")
    g.add_argument("--filter-hz", type=float, help="low-pass cutoff in Hz (default 2)")
    g.add_argument("--fit-start", type=float, help="start of the fitted span, s (default 3)")
    g.add_argument("--fit-end", type=float, help="end of the fitted span, s, exclusive (default 10)")
    g.add_argument("--warmup", type=float,
                   help="prediction starts this many seconds before --fit-start (default 1)")
    g.add_argument("--literal-stability", action="store_const", const=True, default=None,
                   help="use a*Vmin^2 > 2b instead of a*Vmin^2 > 2b*Tm")


def _ambient_args(p):
    g = p.add_argument_group("ambient excitation")
    g.add_argument("--level", type=int, choices=(1, 2, 3), help="disturbance level (default 1)")
    g.add_argument("--duration", type=float, help="window length, s")
    g.add_argument("--dt", type=float, help="sample spacing, s (default 0.01)")
    g.add_argument("--v-mean", type=float, help="mean voltage, p.u.")
    g.add_argument("--theta-mean", type=float, help="mean angle, rad")
    g.add_argument("--noise-std", type=float, help="pre-filter white-noise std at level 1, p.u.")
    g.add_argument("--cutoff", type=float, help="excitation low-pass cutoff, Hz")
    g.add_argument("--angle-ratio", type=float, help="angle noise per unit of magnitude noise")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ambload", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate an ambient measurement window")
    p.add_argument("--out", type=Path, required=True, help="output CSV (t,v,theta,p,q)")
    p.add_argument("--truth", type=Path, help="truth JSON (default: OUT with .json suffix)")
    p.add_argument("--seed", type=int, help="master seed (required)")
    p.add_argument("--load", type=Path, help="JSON with a fixed composite load instead of a random one")
    p.add_argument("--snr", type=float, help="add measurement error at this SNR in dB")
    p.add_argument("--input-margin", type=float,
                   help="V and theta error SNR above --snr, dB (default inf: exact)")
    p.add_argument("--offset-fraction", type=float, help="error offset as a fraction of the mean")
    _ambient_args(p)

    p = sub.add_parser("identify", help="identify motor and ZIP parameters from a window")
    p.add_argument("--data", type=Path, required=True, help="measurement CSV")
    p.add_argument("--out", type=Path, required=True, help="result JSON")
    p.add_argument("--seed", type=int, help="seed for the random starts (required)")
    p.add_argument("--starts", type=int, help="number of random starts (default 3)")
    p.add_argument("--max-iters", type=int, help="iteration cap per start")
    p.add_argument("--omit-timing", action="store_const", const=True, default=None,
                   help="leave wall-clock timing out of the JSON for byte comparisons")
    _window_args(p)

    p = sub.add_parser("validate", help="fitting degree of an identified load under a fault")
    p.add_argument("--actual", type=Path, required=True, help="JSON of the reference load")
    p.add_argument("--identified", type=Path, required=True, help="JSON of the identified load")
    p.add_argument("--out", type=Path, required=True, help="report JSON")
    p.add_argument("--seed", type=int, help="seed of the ambient part of the trajectory (required)")
    p.add_argument("--t-fault", type=float, help="fault start, s")
    p.add_argument("--t-clear", type=float, help="fault clearing, s")
    p.add_argument("--v-sag", type=float, help="voltage during the fault, p.u.")
    p.add_argument("--tau", type=float, help="post-fault recovery time constant, s")
    _ambient_args(p)

    p = sub.add_parser("qconvex", help="midpoint quasi-convexity test")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="report JSON")
    p.add_argument("--seed", type=int, help="sampling seed (required)")
    p.add_argument("--pairs", type=int, help="number of point pairs (default 1000)")
    _window_args(p)

    p = sub.add_parser("reliability", help="many single-start solves against the best one")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="report JSON")
    p.add_argument("--seed", type=int, help="seed for the starts (required)")
    p.add_argument("--starts", type=int, help="number of starts (default 100)")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--omit-timing", action="store_const", const=True, default=None)
    _window_args(p)

    p = sub.add_parser("landscape", help="log10(OF) on a 2-D affine slice")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="grid CSV")
    p.add_argument("--center", type=Path, required=True,
                   help="JSON with the slice center (flat, load, truth or result file)")
    p.add_argument("--d1", type=Path, help="JSON with the first anchor (random if omitted)")
    p.add_argument("--d2", type=Path, help="JSON with the second anchor (random if omitted)")
    p.add_argument("--k1", help="grid for k1 as min:max:count, e.g. --k1=-1:1:41 (the default)")
    p.add_argument("--k2", help="grid for k2, same form")
    p.add_argument("--seed", type=int, help="seed for random anchors")
    _window_args(p)

    for name, sp in sub.choices.items():
        sp.add_argument("--config", type=Path, help="JSON file of option values")
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge built-in defaults, the config file and explicit flags."""
    cmd = args.command
    opts = dict(DEFAULTS.get(cmd, {}))
    if args.config is not None:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(cfg, dict):
            raise UsageError(f"{args.config}: expected a JSON object")
        known = set(vars(args)) | set(opts)
        for key, val in cfg.items():
            k = key.replace("-", "_")
            if k not in known or k in ("command", "config"):
                raise UsageError(f"{args.config}: unknown option {key!r} for '{cmd}'")
            opts[k] = val
    for key, val in vars(args).items():
        if val is not None:
            opts[key] = val
    for key in ("out", "data", "truth", "load", "actual", "identified", "center", "d1", "d2"):
        if opts.get(key) is not None:
            opts[key] = Path(opts[key])
    if cmd in STOCHASTIC and opts.get("seed") is None:
        raise UsageError(f"'{cmd}' is stochastic and needs --seed")
    return opts


def _ambient(o: dict, seed: int = 0) -> AmbientSpec:
    return AmbientSpec(duration=o["duration"], dt=o["dt"], v_mean=o["v_mean"],
                       theta_mean=o["theta_mean"], noise_std=o["noise_std"],
                       cutoff_hz=o["cutoff"], angle_ratio=o["angle_ratio"], seed=seed)


def _policy(o: dict) -> WindowPolicy:
    return WindowPolicy(warmup_skip=o["warmup"], fit_start=o["fit_start"], fit_end=o["fit_end"])


def _objective(data, o: dict) -> Objective:
    return Objective(data, _policy(o), SystemConfig(dt=data.dt),
                     lowpass_hz=None if o["no_filter"] else o["filter_hz"])


def _read_motor(path) -> IMParamsTransformed:
    m = io.motor_from_any(io.read_json(path))
    if not isinstance(m, IMParamsTransformed):
        from .model import transform_params
        m = transform_params(m)
    return m


def _check_out(path: Path):
    if not path.parent.exists():
        raise FileNotFoundError(f"output directory {path.parent} does not exist")


def cmd_simulate(o: dict) -> dict:
    _check_out(o["out"])
    load = io.load_from_dict(io.read_json(o["load"])) if o["load"] else None
    ambient = _ambient(o)
    case = make_case(o["seed"], level=o["level"], snr_db=o["snr"], ambient=ambient, load=load,
                     input_margin_db=float(o["input_margin"]), offset_fraction=o["offset_fraction"])
    io.write_series_csv(case.measured, o["out"])
    truth_path = o["truth"] or o["out"].with_suffix(".json")
    truth = {
        "load": io.load_to_dict(case.load),
        "seeds": case.seeds,
        "ambient": case.ambient,
        "noise": case.noise,
        "level": o["level"],
        "snr_db": None if case.noise is None else _realized_snr(case),
    }
    io.write_json(truth, truth_path)
    return {"csv": str(o["out"]), "truth": str(truth_path), "rows": len(case.measured)}


def _realized_snr(case) -> float:
    from .signals import case_snr_db
    return case_snr_db(case.clean, case.measured)


def cmd_identify(o: dict) -> dict:
    _check_out(o["out"])
    data = io.read_series_csv(o["data"])
    obj = _objective(data, o)
    region = feasible_region_from_data(data, literal_stability=o["literal_stability"])
    opts = SolverOptions(n_starts=o["starts"], max_iters=o["max_iters"], seed=o["seed"])
    res = minimize(data, region, opts, objective=obj)
    res.window_meta.update({
        "filter_hz": None if o["no_filter"] else o["filter_hz"],
        "snr_estimate_db": estimate_snr_db(data),
        "tm_max": region.tm_max, "v_min": region.v_min,
    })
    out = io.result_to_dict(res, timing=not o["omit_timing"])
    io.write_json(out, o["out"])
    return {"of_opt": res.of_opt, "d_opt": io.motor_to_dict(res.d_opt), "timing_s": res.timing_s}


def cmd_validate(o: dict) -> dict:
    _check_out(o["out"])
    actual = io.load_from_dict(io.read_json(o["actual"]))
    ident = io.load_from_dict(io.read_json(o["identified"]))
    base = _ambient(o, seed=o["seed"]).at_level(o["level"])
    fault = FaultSpec(t_fault=o["t_fault"], t_clear=o["t_clear"], v_sag=o["v_sag"],
                      recovery_tau=o["tau"])
    rep = validate_identified(actual, ident, fault, SystemConfig(dt=base.dt), base=base)
    out = {"fd": rep.fd, "fd_p": rep.fd_p, "fd_q": rep.fd_q, "fault": fault, "ambient": base}
    io.write_json(out, o["out"])
    return {"fd": rep.fd}


def cmd_qconvex(o: dict) -> dict:
    _check_out(o["out"])
    if o["pairs"] < 1:
        raise UsageError("--pairs must be >= 1")
    data = io.read_series_csv(o["data"])
    region = feasible_region_from_data(data, literal_stability=o["literal_stability"])
    t0 = time.perf_counter()
    rep = quasiconvexity_test(data, region, o["pairs"], o["seed"], objective=_objective(data, o))
    out = {
        "n_pairs": rep.n_pairs, "n_success": rep.n_success, "sp": rep.sp,
        "n_resampled": rep.n_resampled,
        "failures": [{"left": io.motor_to_dict(l), "right": io.motor_to_dict(r),
                      "of_left": f[0], "of_mid": f[1], "of_right": f[2]}
                     for l, r, f in rep.failures],
    }
    io.write_json(out, o["out"])
    return {"sp": rep.sp, "timing_s": time.perf_counter() - t0}


def cmd_reliability(o: dict) -> dict:
    _check_out(o["out"])
    if o["starts"] < 1:
        raise UsageError("--starts must be >= 1")
    data = io.read_series_csv(o["data"])
    region = feasible_region_from_data(data, literal_stability=o["literal_stability"])
    opts = SolverOptions(n_starts=o["starts"], max_iters=o["max_iters"], seed=o["seed"])
    rep = reliability_test(data, region, o["starts"], o["seed"], opts,
                           objective=_objective(data, o))
    out = {"sp": rep.sp, "sp_signed": rep.sp_signed, "threshold": rep.threshold,
           "distances": rep.distances, "best": io.result_to_dict(rep.best, not o["omit_timing"])}
    io.write_json(out, o["out"])
    return {"sp": rep.sp}


def parse_grid(text: str) -> np.ndarray:
    try:
        lo, hi, n = str(text).split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise UsageError(f"grid {text!r} is not of the form min:max:count") from None
    if n < 1 or (n > 1 and not hi > lo):
        raise UsageError(f"grid {text!r} needs count >= 1 and max > min")
    return np.linspace(lo, hi, n)


def cmd_landscape(o: dict) -> dict:
    _check_out(o["out"])
    data = io.read_series_csv(o["data"])
    region = feasible_region_from_data(data, literal_stability=o["literal_stability"])
    center = _read_motor(o["center"])
    anchors = []
    rng = None
    for key in ("d1", "d2"):
        if o[key] is not None:
            anchors.append(_read_motor(o[key]))
            continue
        if o.get("seed") is None:
            raise UsageError(f"--{key} omitted: a random anchor needs --seed")
        rng = rng or np.random.default_rng(o["seed"])
        anchors.append(sample_feasible(region, rng=rng))
    k1, k2 = parse_grid(o["k1"]), parse_grid(o["k2"])
    grid = landscape_slice(data, center, anchors[0], anchors[1], k1, k2, region,
                           objective=_objective(data, o))
    io.write_landscape_csv(grid, o["out"])
    return {"shape": list(grid.values.shape), "min": float(grid.values.min())}


COMMANDS = {
    "simulate": cmd_simulate,
    "identify": cmd_identify,
    "validate": cmd_validate,
    "qconvex": cmd_qconvex,
    "reliability": cmd_reliability,
    "landscape": cmd_landscape,
}


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, DomainError):
        return EXIT_USAGE
    if isinstance(exc, AmbLoadError):
        return EXIT_NUMERIC
    if isinstance(exc, OSError):
        return EXIT_IO
    raise exc


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve(args)
        summary = COMMANDS[args.command](opts)
    except (AmbLoadError, OSError) as exc:
        code = exit_code(exc)
        print(f"ambload {args.command}: error: {exc}", file=sys.stderr)
        return code
    print(json.dumps(io._plain(summary), sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
