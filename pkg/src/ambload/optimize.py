"""Upper stage: constrained minimisation of ``OF(D)`` over ``D = [a, b, H2, Tm]``.

The local solver is a projected quasi-Newton (BFGS) method in box-scaled
coordinates with central finite-difference gradients and an Armijo line
search along the projection arc. The stability cut ``a*Vmin^2 > 2*b*Tm`` is
enforced by mapping infeasible trial points to a penalty value, so accepted
iterates are always feasible.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import AllStartsFailedError, DomainError, SamplingError
from .model import IMParamsTransformed, MeasurementSeries, SystemConfig, ZIPParams
from .regression import Objective, WindowPolicy

log = logging.getLogger(__name__)

BOX_LOWER = (10.0, 3.0, 0.5)
BOX_UPPER = (80.0, 30.0, 3.0)


@dataclass(frozen=True)
class FeasibleRegion:
    """Search box for ``[a, b, H2]``, ``0 <= Tm <= tm_max`` and the
    stability cut evaluated at the window's minimum voltage.

    ``literal_stability`` switches the cut to ``a*Vmin^2 > 2*b`` (no Tm).
    """

    lower: tuple = BOX_LOWER
    upper: tuple = BOX_UPPER
    tm_max: float = 1.0
    v_min: float = 1.0
    literal_stability: bool = False

    def __post_init__(self):
        if not all(lo < hi for lo, hi in zip(self.lower, self.upper)):
            raise DomainError("lower bounds must be below upper bounds")
        if not self.tm_max > 0:
            raise DomainError(f"tm_max must be positive, got {self.tm_max}")
        if not self.v_min > 0:
            raise DomainError(f"v_min must be positive, got {self.v_min}")

    @property
    def lo(self) -> np.ndarray:
        return np.array([*self.lower, 0.0])

    @property
    def hi(self) -> np.ndarray:
        return np.array([*self.upper, self.tm_max])

    def to_unit(self, x) -> np.ndarray:
        return (np.asarray(x, float) - self.lo) / (self.hi - self.lo)

    def from_unit(self, z) -> np.ndarray:
        return self.lo + np.asarray(z, float) * (self.hi - self.lo)

    def stability_margin(self, x) -> float:
        a, b, _, tm = x
        load = 2.0 * b if self.literal_stability else 2.0 * b * tm
        return a * self.v_min ** 2 - load


def feasible_region_from_data(data: MeasurementSeries, literal_stability: bool = False) -> FeasibleRegion:
    """Default box with ``tm_max = mean(P)`` and ``v_min = min(V)``."""
    if len(data.P) == 0:
        raise DomainError("empty data window")
    return FeasibleRegion(tm_max=float(np.mean(data.P)), v_min=float(np.min(data.V)),
                          literal_stability=literal_stability)


class Feasibility(NamedTuple):
    ok: bool
    violations: tuple

    def __bool__(self):
        return self.ok


def is_feasible(d: IMParamsTransformed, region: FeasibleRegion) -> Feasibility:
    x = d.as_array()
    lo, hi = region.lo, region.hi
    names = ("a", "b", "H2", "Tm")
    bad = []
    for name, v, l, h in zip(names, x, lo, hi):
        if not l <= v <= h:
            bad.append(f"{name}={v:.6g} outside [{l:.6g}, {h:.6g}]")
    if not region.stability_margin(x) > 0:
        rhs = "2*b" if region.literal_stability else "2*b*Tm"
        bad.append(f"stability: a*Vmin^2 = {x[0] * region.v_min ** 2:.6g} "
                   f"not above {rhs} = {x[0] * region.v_min ** 2 - region.stability_margin(x):.6g}")
    return Feasibility(not bad, tuple(bad))


def sample_feasible(region: FeasibleRegion, seed=None, rng: np.random.Generator | None = None,
                    max_tries: int = 100_000) -> IMParamsTransformed:
    """Uniform draw from the box intersected with the stability cut."""
    rng = rng if rng is not None else np.random.default_rng(seed)
    lo, hi = region.lo, region.hi
    for _ in range(max_tries):
        x = lo + rng.random(4) * (hi - lo)
        if region.stability_margin(x) > 0:
            return IMParamsTransformed.from_array(x)
    raise SamplingError(f"no feasible point after {max_tries} draws; region is effectively empty")


@dataclass(frozen=True)
class SolverOptions:
    n_starts: int = 3
    max_iters: int = 200
    gradient_step: float = 1e-4
    tol_step: float = 1e-7
    penalty_value: float = 1e3
    seed: int = 0
    max_step: float = 0.2
    armijo: float = 1e-4

    def __post_init__(self):
        if self.n_starts < 1:
            raise DomainError("n_starts must be >= 1")
        if self.max_iters < 1:
            raise DomainError("max_iters must be >= 1")
        if not (self.gradient_step > 0 and self.tol_step > 0 and self.max_step > 0):
            raise DomainError("tolerances must be positive")


@dataclass
class StartRecord:
    index: int
    x0: np.ndarray
    x: np.ndarray
    of: float
    iterations: int
    n_evals: int
    converged: bool
    message: str
    history: list = field(default_factory=list)


@dataclass
class IdentificationResult:
    d_opt: IMParamsTransformed
    os_opt: ZIPParams
    of_opt: float
    starts: list
    best_so_far: list
    window_meta: dict = field(default_factory=dict)
    timing_s: float = 0.0


class ScaledProblem:
    """Objective in unit-box coordinates with penalty for infeasible points."""

    def __init__(self, objective: Callable[[IMParamsTransformed], float],
                 region: FeasibleRegion, penalty: float):
        self.objective = objective
        self.region = region
        self.penalty = penalty
        self.n_evals = 0

    def __call__(self, z) -> float:
        self.n_evals += 1
        x = self.region.from_unit(z)
        if x[0] <= 0 or x[1] <= 0 or x[2] <= 0 or x[3] < 0:
            return self.penalty
        if not self.region.stability_margin(x) > 0:
            return self.penalty
        val = self.objective(IMParamsTransformed.from_array(x))
        return val if np.isfinite(val) else self.penalty

    def gradient(self, z, fz: float, h: float) -> np.ndarray:
        g = np.zeros_like(z)
        for i in range(z.size):
            up = z.copy()
            dn = z.copy()
            up[i] = min(z[i] + h, 1.0)
            dn[i] = max(z[i] - h, 0.0)
            fu = self(up) if up[i] > z[i] else fz
            fd = self(dn) if dn[i] < z[i] else fz
            # fall back to a one-sided difference across the penalty cliff
            if fu >= self.penalty:
                up, fu = z, fz
            if fd >= self.penalty:
                dn, fd = z, fz
            width = up[i] - dn[i]
            g[i] = (fu - fd) / width if width > 0 else 0.0
        return g


def local_solve(problem: ScaledProblem, z0, opts: SolverOptions, index: int = 0) -> StartRecord:
    """Projected BFGS from ``z0`` (unit-box coordinates)."""
    n0 = problem.n_evals
    z = np.clip(np.asarray(z0, float), 0.0, 1.0)
    fz = problem(z)
    history = [fz]
    if fz >= opts.penalty_value:
        return StartRecord(index, z.copy(), z.copy(), fz, 0, problem.n_evals - n0,
                           False, "infeasible start", history)
    h = opts.gradient_step
    g = problem.gradient(z, fz, h)
    H = None
    converged = False
    message = "max_iters reached"
    it = 0
    short = 0
    eps = 1e-12
    for it in range(1, opts.max_iters + 1):
        active = ((z <= eps) & (g > 0)) | ((z >= 1.0 - eps) & (g < 0))
        free = ~active
        if not free.any():
            converged, message = True, "all variables at active bounds"
            break
        if H is None:
            p = np.where(free, -g, 0.0)
        else:
            Hf = H[np.ix_(free, free)]
            p = np.zeros_like(z)
            p[free] = -Hf @ g[free]
            if g @ p >= 0:
                H = None
                p = np.where(free, -g, 0.0)
        norm = np.linalg.norm(p)
        if norm == 0.0:
            converged, message = True, "zero gradient"
            break
        if H is not None and np.linalg.norm(np.clip(z + p, 0.0, 1.0) - z) < opts.tol_step:
            converged, message = True, "step below tolerance"
            break
        # steepest-descent steps carry no curvature; give them a fixed length
        if H is None or norm > opts.max_step:
            p *= opts.max_step / norm
        alpha = 1.0
        accepted = False
        for _ in range(40):
            zn = np.clip(z + alpha * p, 0.0, 1.0)
            fn = problem(zn)
            if fn < opts.penalty_value and fn <= fz + opts.armijo * (g @ (zn - z)):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            converged = np.linalg.norm(alpha * p) < opts.tol_step * 10
            message = "line search stalled"
            break
        s = zn - z
        step = np.linalg.norm(s)
        gn = problem.gradient(zn, fn, h)
        y = gn - g
        z, fz, g = zn, fn, gn
        history.append(fz)
        # a short step signals convergence unless it was cut back; repeated
        # short cut-back steps mean the line search is grinding at the floor
        short = short + 1 if step < opts.tol_step else 0
        if short and (alpha == 1.0 or short >= 3):
            converged, message = True, "step below tolerance"
            break
        sy = s @ y
        if sy > 1e-12 * step * np.linalg.norm(y):
            if H is None:
                H = np.eye(z.size) * (sy / (y @ y))
            rho = 1.0 / sy
            I = np.eye(z.size)
            H = (I - rho * np.outer(s, y)) @ H @ (I - rho * np.outer(y, s)) + rho * np.outer(s, s)
    return StartRecord(index, np.asarray(z0, float).copy(), z.copy(), float(fz), it,
                       problem.n_evals - n0, bool(converged), message, history)


def _start_points(region: FeasibleRegion, opts: SolverOptions):
    seqs = np.random.SeedSequence(opts.seed).spawn(opts.n_starts)
    return [sample_feasible(region, rng=np.random.default_rng(s)) for s in seqs]


def minimize(data: MeasurementSeries, region: FeasibleRegion | None = None,
             opts: SolverOptions | None = None, policy: WindowPolicy | None = None,
             cfg: SystemConfig | None = None, initial_points=None,
             objective: Objective | None = None) -> IdentificationResult:
    """Multi-start identification of the motor parameters.

    ``initial_points`` overrides the random feasible starts (one start per
    point).
    """
    t_start = time.perf_counter()
    opts = opts or SolverOptions()
    objective = objective or Objective(data, policy, cfg)
    region = region or feasible_region_from_data(data)
    problem = ScaledProblem(lambda d: objective.value(d, penalty=opts.penalty_value),
                            region, opts.penalty_value)
    if initial_points is None:
        initial_points = _start_points(region, opts)
    records = []
    best = None
    best_so_far = []
    for k, d0 in enumerate(initial_points):
        rec = local_solve(problem, region.to_unit(d0.as_array()), opts, index=k)
        rec.x0 = region.from_unit(rec.x0)
        rec.x = region.from_unit(rec.x)
        records.append(rec)
        if rec.of < opts.penalty_value and (best is None or rec.of < best.of):
            best = rec
        best_so_far.append(best.of if best is not None else opts.penalty_value)
        log.debug("start %d: OF=%.3e after %d iterations (%s)", k, rec.of, rec.iterations, rec.message)
    if best is None:
        raise AllStartsFailedError(f"all {len(records)} starts ended on the penalty value")
    d_opt = IMParamsTransformed.from_array(best.x)
    of_opt, os_opt, _ = objective.evaluate(d_opt)
    meta = {"policy": objective.policy, "l": objective.l,
            "low_excitation": objective.low_excitation, "n_evals": problem.n_evals}
    return IdentificationResult(d_opt, os_opt, of_opt, records, best_so_far, meta,
                                time.perf_counter() - t_start)
