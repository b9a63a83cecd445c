"""Time-domain simulation of the composite load against a voltage trajectory.

The same routines generate synthetic measurements and act as the forward
model inside identification. The default integrator is the classical
four-stage explicit method at the data rate: explicit Euler at 0.01 s goes
unstable on the lightly damped electromechanical mode over roughly a quarter
of the search box, while the continuous model is stable there. Euler stays
available as ``method="euler"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DivergenceError, DomainError, InfeasibleError
from .model import (
    IMParamsPhysical,
    IMParamsTransformed,
    IMState,
    MeasurementSeries,
    PhasorDQ,
    SystemConfig,
    ZIPParams,
    im_original_model,
    polar_to_dq,
    transform_params,
    zip_power,
)

DIVERGENCE_GUARD = 1e6

_METHODS = {"euler": _kernels.EULER, "rk4": _kernels.RK4}


@dataclass(frozen=True)
class CompositeLoad:
    """ZIP static part plus an induction motor.

    ``motor`` may be physical; then the motor Q includes ``V^2/X'`` and the
    model is simulated with the original equations.
    """

    motor: IMParamsTransformed | IMParamsPhysical
    zip: ZIPParams

    @property
    def physical(self) -> bool:
        return isinstance(self.motor, IMParamsPhysical)

    def transformed(self) -> "CompositeLoad":
        """Equivalent transformed-mode load (``Qz`` absorbs ``1/X'``)."""
        if not self.physical:
            return self
        m = self.motor
        z = self.zip
        zq = ZIPParams(z.Pz, z.Pi, z.Pp, z.Qz + 1.0 / m.Xp, z.Qi, z.Qp)
        return CompositeLoad(transform_params(m), zq)


@dataclass(frozen=True)
class SimOptions:
    """Integrator settings.

    ``dt`` is the internal step; ``record_stride`` internal steps make up one
    input/output sample, so ``dt * record_stride`` must equal the data
    spacing. ``dt=None`` means one step per sample.
    """

    method: str = "rk4"
    dt: float | None = None
    record_stride: int = 1

    def __post_init__(self):
        if self.method not in _METHODS:
            raise DomainError(f"unknown integrator {self.method!r}; use one of {sorted(_METHODS)}")
        if self.dt is not None and not self.dt > 0:
            raise DomainError("dt must be positive")
        if self.record_stride < 1:
            raise DomainError("record_stride must be >= 1")

    def step(self, sample_dt: float) -> float:
        if self.dt is None:
            return sample_dt / self.record_stride
        if not math.isclose(self.dt * self.record_stride, sample_dt, rel_tol=1e-9):
            raise DomainError(
                f"dt*record_stride = {self.dt * self.record_stride} does not match "
                f"the sample spacing {sample_dt}")
        return self.dt


def steady_state_slip(d: IMParamsTransformed, vmag: float, cfg: SystemConfig) -> float:
    """Smaller (stable) root of the torque-balance quadratic."""
    av2 = d.a * vmag * vmag
    disc = av2 * av2 - 4.0 * d.Tm * d.Tm * d.b * d.b
    if disc < 0:
        raise InfeasibleError(
            f"motor cannot carry Tm={d.Tm:.6g} at |V|={vmag:.6g}: "
            f"peak torque a*V^2/(2b) = {av2 / (2 * d.b):.6g}")
    # rationalised form; exact at Tm = 0 and free of cancellation
    return 2.0 * d.Tm * d.b * d.b / (cfg.omega0 * (av2 + math.sqrt(disc)))


def steady_state_init(d: IMParamsTransformed, v0: PhasorDQ, cfg: SystemConfig) -> IMState:
    """Equilibrium ``(Fd, Fq, s)`` of the transformed motor at voltage ``v0``."""
    vmag = math.hypot(v0.Vd, v0.Vq)
    s = steady_state_slip(d, vmag, cfg)
    f = d.a * complex(v0.Vd, v0.Vq) / complex(d.b, s * cfg.omega0)
    return IMState(f.real, f.imag, s)


def _check_trajectory(V, theta):
    V = np.asarray(V, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if V.shape != theta.shape or V.ndim != 1 or V.size < 1:
        raise DomainError("V and theta must be 1-D arrays of equal length")
    return V, theta


def _run_transformed(d: IMParamsTransformed, V, theta, cfg: SystemConfig,
                     opts: SimOptions, init: IMState | None = None):
    vd, vq = polar_to_dq(V, theta)
    vd = np.ascontiguousarray(vd)
    vq = np.ascontiguousarray(vq)
    if init is None:
        init = steady_state_init(d, PhasorDQ(vd[0], vq[0]), cfg)
    h = opts.step(cfg.dt)
    p, q, states, status = _kernels.integrate_motor(
        vd, vq, float(d.a), float(d.b), float(d.H2), float(d.Tm), float(cfg.omega0),
        float(h), int(opts.record_stride), _METHODS[opts.method],
        float(init.Fd), float(init.Fq), float(init.s), DIVERGENCE_GUARD)
    if status != 0:
        raise DivergenceError(f"motor state exceeded {DIVERGENCE_GUARD:g} for {d}")
    return p, q, states


def predict_im_power(d: IMParamsTransformed, V, theta, cfg: SystemConfig,
                     opts: SimOptions | None = None):
    """Motor ``(P, Q)`` along a measured voltage trajectory, starting from
    the equilibrium at the first sample."""
    V, theta = _check_trajectory(V, theta)
    p, q, _ = _run_transformed(d, V, theta, cfg, opts or SimOptions())
    return p, q


def _physical_rates(state, u: PhasorDQ, phys, cfg):
    rates, _, _ = im_original_model(state, u, phys, cfg)
    return np.array(rates)


def _run_physical(phys: IMParamsPhysical, V, theta, cfg: SystemConfig, opts: SimOptions):
    """Reference integration of the untransformed equations (pure Python)."""
    phys.validate()
    vd, vq = polar_to_dq(V, theta)
    d = transform_params(phys)
    f0 = steady_state_init(d, PhasorDQ(vd[0], vq[0]), cfg)
    x = np.array([f0.Fd * phys.Xp, f0.Fq * phys.Xp, f0.s])
    h = opts.step(cfg.dt)
    m = opts.record_stride
    n = len(vd)
    p = np.empty(n)
    q = np.empty(n)
    for k in range(n):
        if k > 0:
            dvd = (vd[k] - vd[k - 1]) / m
            dvq = (vq[k] - vq[k - 1]) / m
            for j in range(m):
                u0 = PhasorDQ(vd[k - 1] + j * dvd, vq[k - 1] + j * dvq)
                if opts.method == "euler":
                    x = x + h * _physical_rates(x, u0, phys, cfg)
                else:
                    um = PhasorDQ(u0.Vd + 0.5 * dvd, u0.Vq + 0.5 * dvq)
                    ue = PhasorDQ(u0.Vd + dvd, u0.Vq + dvq)
                    k1 = _physical_rates(x, u0, phys, cfg)
                    k2 = _physical_rates(x + 0.5 * h * k1, um, phys, cfg)
                    k3 = _physical_rates(x + 0.5 * h * k2, um, phys, cfg)
                    k4 = _physical_rates(x + h * k3, ue, phys, cfg)
                    x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.abs(x) <= DIVERGENCE_GUARD):
                raise DivergenceError(f"motor state exceeded {DIVERGENCE_GUARD:g} for {phys}")
        _, p[k], q[k] = im_original_model(x, PhasorDQ(vd[k], vq[k]), phys, cfg)
    return p, q


def simulate_composite(load: CompositeLoad, V, theta, cfg: SystemConfig,
                       opts: SimOptions | None = None, t0: float = 0.0) -> MeasurementSeries:
    """Total ``P, Q`` of a composite load driven by ``(V, theta)``."""
    opts = opts or SimOptions()
    V, theta = _check_trajectory(V, theta)
    if load.physical:
        p_im, q_im = _run_physical(load.motor, V, theta, cfg, opts)
    else:
        p_im, q_im, _ = _run_transformed(load.motor, V, theta, cfg, opts)
    p_st, q_st = zip_power(load.zip, V)
    t = t0 + cfg.dt * np.arange(len(V))
    return MeasurementSeries(t, V.copy(), theta.copy(), p_im + p_st, q_im + q_st)


def motor_states(d: IMParamsTransformed, V, theta, cfg: SystemConfig,
                 opts: SimOptions | None = None) -> np.ndarray:
    """Per-sample ``(Fd, Fq, s)`` rows of the transformed motor."""
    V, theta = _check_trajectory(V, theta)
    _, _, states = _run_transformed(d, V, theta, cfg, opts or SimOptions())
    return states
