"""Synthetic single-bus identification cases."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import IMParamsTransformed, MeasurementSeries, SystemConfig, ZIPParams
from .signals import AmbientSpec, NoiseSpec, generate_ambient, inject_noise
from .simulate import CompositeLoad, SimOptions, simulate_composite


@dataclass(frozen=True)
class LoadRanges:
    """Sampling ranges for generating motors strictly inside the search box."""

    a: tuple = (25.0, 65.0)
    b: tuple = (8.0, 24.0)
    h2: tuple = (0.8, 2.5)
    loading: tuple = (0.3, 0.7)       # Tm as a fraction of the pull-out torque
    static_ratio: tuple = (0.6, 1.5)  # static P relative to Tm
    x: tuple = (2.0, 4.0)             # open-circuit reactance, sets 1/X' in Qz


def random_load(rng: np.random.Generator, v_ref: float = 1.0,
                ranges: LoadRanges = LoadRanges()) -> CompositeLoad:
    a = rng.uniform(*ranges.a)
    b = rng.uniform(*ranges.b)
    h2 = rng.uniform(*ranges.h2)
    tm = rng.uniform(*ranges.loading) * a * v_ref ** 2 / (2.0 * b)
    p_st = tm * rng.uniform(*ranges.static_ratio)
    fp = rng.dirichlet([2.0, 2.0, 2.0])
    q_st = p_st * rng.uniform(0.1, 0.4)
    fq = rng.dirichlet([2.0, 2.0, 2.0])
    # Qz carries the motor's 1/X' = a/b + 1/X
    inv_xp = a / b + 1.0 / rng.uniform(*ranges.x)
    zip_ = ZIPParams(Pz=p_st * fp[0], Pi=p_st * fp[1], Pp=p_st * fp[2],
                     Qz=q_st * fq[0] + inv_xp, Qi=q_st * fq[1], Qp=q_st * fq[2])
    return CompositeLoad(IMParamsTransformed(a, b, h2, tm), zip_)


@dataclass
class Case:
    load: CompositeLoad
    ambient: AmbientSpec
    clean: MeasurementSeries
    measured: MeasurementSeries
    noise: NoiseSpec | None = None
    seeds: dict | None = None


def make_case(seed: int, level: int = 1, snr_db: float | None = None,
              ambient: AmbientSpec | None = None, load: CompositeLoad | None = None,
              cfg: SystemConfig | None = None, input_margin_db: float = math.inf,
              offset_fraction: float = 0.001) -> Case:
    """Random load driven by ambient excitation, optionally with measurement
    error at ``snr_db``. Seeds for load, excitation and error are derived
    from ``seed``."""
    ss = np.random.SeedSequence(seed)
    k_load, k_amb, k_noise = (int(s.generate_state(1)[0]) for s in ss.spawn(3))
    ambient = replace(ambient or AmbientSpec(), seed=k_amb).at_level(level)
    cfg = cfg or SystemConfig(dt=ambient.dt)
    V, theta = generate_ambient(ambient)
    if load is None:
        # loading is relative to pull-out at the lowest voltage in the window
        load = random_load(np.random.default_rng(k_load), float(V.min()))
    clean = simulate_composite(load, V, theta, cfg, SimOptions())
    noise = None
    measured = clean
    if snr_db is not None:
        noise = NoiseSpec(target_snr_db=snr_db, offset_fraction=offset_fraction, seed=k_noise,
                          input_margin_db=input_margin_db)
        measured = inject_noise(clean, noise)
    seeds = {"seed": seed, "load": k_load, "ambient": k_amb, "noise": k_noise}
    return Case(load, ambient, clean, measured, noise, seeds)
