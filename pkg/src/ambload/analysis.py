"""Empirical study harnesses: quasi-convexity, multi-start reliability,
objective landscapes, fault validation and batch statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import AmbLoadError, DivergenceError, DomainError, InfeasibleError
from .model import IMParamsTransformed, MeasurementSeries, SystemConfig
from .optimize import (
    FeasibleRegion,
    IdentificationResult,
    SolverOptions,
    is_feasible,
    minimize,
    sample_feasible,
)
from .regression import Objective
from .signals import AmbientSpec, FaultSpec, generate_fault_voltage
from .simulate import CompositeLoad, SimOptions, simulate_composite

LANDSCAPE_SENTINEL = 6.0
PARAM_NAMES = ("a", "b", "H2", "Tm")

ObjectiveFn = Callable[[IMParamsTransformed], float]


def _objective_fn(data, objective, penalty: float = 1e3) -> ObjectiveFn:
    if objective is None:
        objective = Objective(data)
    if isinstance(objective, Objective):
        obj = objective
        return lambda d: obj.value(d, penalty=penalty)
    return objective


@dataclass
class QConvexReport:
    n_pairs: int
    n_success: int
    sp: float
    failures: list = field(default_factory=list)
    n_resampled: int = 0


def quasiconvexity_test(data: MeasurementSeries | None, region: FeasibleRegion, n_pairs: int,
                        seed: int, objective=None, tol: float = 1e-12) -> QConvexReport:
    """Midpoint test on random feasible pairs.

    A pair succeeds when ``OF(midpoint) <= max(OF(left), OF(right)) + tol``.
    Pairs whose midpoint leaves the feasible set are redrawn and counted in
    ``n_resampled``. ``objective`` may be an :class:`Objective` or any
    callable on :class:`IMParamsTransformed`.
    """
    if n_pairs < 1:
        raise DomainError("n_pairs must be >= 1")
    f = _objective_fn(data, objective)
    rng = np.random.default_rng(seed)
    n_ok = 0
    resampled = 0
    failures = []
    for _ in range(n_pairs):
        while True:
            left = sample_feasible(region, rng=rng)
            right = sample_feasible(region, rng=rng)
            mid = IMParamsTransformed.from_array(0.5 * (left.as_array() + right.as_array()))
            if is_feasible(mid, region):
                break
            resampled += 1
        fl, fr, fm = f(left), f(right), f(mid)
        if fm <= max(fl, fr) + tol:
            n_ok += 1
        else:
            failures.append((left, right, (fl, fm, fr)))
    return QConvexReport(n_pairs, n_ok, 100.0 * n_ok / n_pairs, failures, resampled)


def normalized_distance(d, ref, signed: bool = False) -> float:
    """``sum_j |d_j / ref_j - 1|``; ``signed=True`` drops the absolute value."""
    r = np.asarray(d, float) / np.asarray(ref, float) - 1.0
    return float(r.sum() if signed else np.abs(r).sum())


@dataclass
class ReliabilityReport:
    sp: float
    sp_signed: float
    best: IdentificationResult
    distances: np.ndarray
    threshold: float = 0.1


def reliability_test(data: MeasurementSeries, region: FeasibleRegion, n_starts: int, seed: int,
                     opts: SolverOptions | None = None, objective: Objective | None = None,
                     initial_points=None, threshold: float = 0.1) -> ReliabilityReport:
    """Independent single starts; success when the end point lies within
    normalised distance ``threshold`` of the best one."""
    from dataclasses import replace
    opts = replace(opts or SolverOptions(), n_starts=n_starts, seed=seed)
    res = minimize(data, region, opts, objective=objective, initial_points=initial_points)
    ref = res.d_opt.as_array()
    dist = np.array([normalized_distance(r.x, ref) if r.of < opts.penalty_value else np.inf
                     for r in res.starts])
    signed = np.array([normalized_distance(r.x, ref, signed=True) if r.of < opts.penalty_value
                       else np.inf for r in res.starts])
    n = len(res.starts)
    return ReliabilityReport(100.0 * np.sum(dist < threshold) / n,
                             100.0 * np.sum(signed < threshold) / n, res, dist, threshold)


@dataclass
class LandscapeGrid:
    d_center: IMParamsTransformed
    d1: IMParamsTransformed
    d2: IMParamsTransformed
    k1: np.ndarray
    k2: np.ndarray
    values: np.ndarray  # values[i, j] at (k1[i], k2[j])
    feasible: np.ndarray

    def point(self, k1: float, k2: float) -> IMParamsTransformed:
        return slice_point(self.d_center, self.d1, self.d2, k1, k2)


def slice_point(center, d1, d2, k1, k2) -> IMParamsTransformed:
    c = center.as_array()
    return IMParamsTransformed.from_array(c + k1 * (d1.as_array() - c) + k2 * (d2.as_array() - c))


def landscape_slice(data: MeasurementSeries | None, d_center: IMParamsTransformed,
                    d1: IMParamsTransformed, d2: IMParamsTransformed, k1, k2,
                    region: FeasibleRegion, objective=None) -> LandscapeGrid:
    """``log10(OF)`` on the affine plane through ``d_center`` spanned by the
    anchors; infeasible or failed cells hold :data:`LANDSCAPE_SENTINEL`."""
    c = d_center.as_array()
    if np.allclose(d1.as_array(), c) or np.allclose(d2.as_array(), c):
        raise DomainError("slice anchors must differ from the center")
    f = _objective_fn(data, objective, penalty=math.inf)
    k1 = np.asarray(k1, float)
    k2 = np.asarray(k2, float)
    values = np.full((k1.size, k2.size), LANDSCAPE_SENTINEL)
    feas = np.zeros((k1.size, k2.size), dtype=bool)
    for i, u in enumerate(k1):
        for j, w in enumerate(k2):
            d = slice_point(d_center, d1, d2, u, w)
            if not is_feasible(d, region):
                continue
            feas[i, j] = True
            val = f(d)
            if np.isfinite(val):
                values[i, j] = math.log10(max(val, 1e-300))
    return LandscapeGrid(d_center, d1, d2, k1, k2, values, feas)


def ray_monotonicity(objective, center: IMParamsTransformed, region: FeasibleRegion,
                     n_rays: int = 8, n_steps: int = 50, seed: int = 0,
                     step: float = 0.02) -> tuple[int, int]:
    """Walk random rays (in box-scaled coordinates) out of ``center`` until
    the first infeasible point. Returns ``(non_monotone_steps, total_steps)``
    where a step is non-monotone if the objective decreases moving outward."""
    f = _objective_fn(None, objective, penalty=math.inf)
    rng = np.random.default_rng(seed)
    z0 = region.to_unit(center.as_array())
    bad = total = 0
    for _ in range(n_rays):
        u = rng.standard_normal(4)
        u /= np.linalg.norm(u)
        prev = f(center)
        for k in range(1, n_steps + 1):
            d = IMParamsTransformed.from_array(region.from_unit(z0 + k * step * u))
            if not is_feasible(d, region):
                break
            val = f(d)
            total += 1
            if val < prev:
                bad += 1
            prev = val
    return bad, total


def fitting_degree(y_reference, y_test) -> float:
    """``1 - sum((y2 - y1)^2) / sum((y1 - mean(y1))^2)`` with ``y1`` the
    reference response."""
    y1 = np.asarray(y_reference, float)
    y2 = np.asarray(y_test, float)
    if y1.shape != y2.shape:
        raise DomainError("series must have equal lengths")
    den = float(np.sum((y1 - y1.mean()) ** 2))
    if den == 0:
        raise DomainError("reference series has zero variance")
    return 1.0 - float(np.sum((y2 - y1) ** 2)) / den


@dataclass
class ValidationReport:
    fd_p: float
    fd_q: float
    fd: float
    event_meta: dict = field(default_factory=dict)


# fine internal step: deep sags push the slip well beyond its ambient range
VALIDATION_SIM = SimOptions(method="rk4", dt=0.001, record_stride=10)


def validate_identified(actual: CompositeLoad, identified: CompositeLoad, fault: FaultSpec,
                        cfg: SystemConfig | None = None, opts: SimOptions | None = None,
                        base: AmbientSpec | None = None) -> ValidationReport:
    """Compare both loads' responses to one fault voltage trajectory."""
    base = base or AmbientSpec(duration=5.0)
    cfg = cfg or SystemConfig(dt=base.dt)
    opts = opts or SimOptions(method="rk4", dt=base.dt / 10, record_stride=10)
    V, theta = generate_fault_voltage(fault, base)
    out = []
    for label, load in (("scenario 1 (actual load)", actual),
                        ("scenario 2 (identified load)", identified)):
        try:
            out.append(simulate_composite(load.transformed(), V, theta, cfg, opts))
        except (DivergenceError, InfeasibleError) as exc:
            raise type(exc)(f"{label}: {exc}") from exc
    ref, test = out
    fd_p = fitting_degree(ref.P, test.P)
    fd_q = fitting_degree(ref.Q, test.Q)
    meta = {"fault": fault, "ambient": base}
    return ValidationReport(fd_p, fd_q, 0.5 * (fd_p + fd_q), meta)


@dataclass
class BatchSummary:
    mean: dict
    std: dict
    n: int
    mean_snr_db: float | None = None

    def rows(self):
        return [(name, self.mean[name], self.std[name]) for name in PARAM_NAMES]


def batch_statistics(results: Sequence, snr_db: Sequence[float] | None = None) -> BatchSummary:
    """Per-parameter mean and sample standard deviation of ``D_opt / D_real``.

    ``results`` holds ``(identified, truth)`` pairs; each element may be an
    :class:`IdentificationResult`, :class:`IMParamsTransformed` or array.
    """
    if len(results) == 0:
        raise DomainError("no results to summarise")

    def arr(x):
        if isinstance(x, IdentificationResult):
            x = x.d_opt
        if isinstance(x, IMParamsTransformed):
            return x.as_array()
        return np.asarray(x, float)

    ratios = np.array([arr(r) / arr(t) for r, t in results])
    sd = ratios.std(axis=0, ddof=1) if len(ratios) > 1 else np.zeros(4)
    mean_snr = float(np.mean(snr_db)) if snr_db is not None and len(snr_db) else None
    return BatchSummary(dict(zip(PARAM_NAMES, ratios.mean(axis=0))),
                        dict(zip(PARAM_NAMES, sd)), len(ratios), mean_snr)


__all__ = [
    "AmbLoadError",
    "BatchSummary",
    "LANDSCAPE_SENTINEL",
    "LandscapeGrid",
    "QConvexReport",
    "ReliabilityReport",
    "ValidationReport",
    "batch_statistics",
    "fitting_degree",
    "landscape_slice",
    "normalized_distance",
    "quasiconvexity_test",
    "ray_monotonicity",
    "reliability_test",
    "slice_point",
    "validate_identified",
]
