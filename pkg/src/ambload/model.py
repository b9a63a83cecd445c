"""Composite load model: third-order induction motor (original and
transformed parameterisation) plus the ZIP static load.

All quantities are per-unit on the load's measurement base. The d/q frame is
the network synchronous frame, so (Vd, Vq) come straight from the measured
magnitude and angle.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class SystemConfig:
    """Network-wide constants.

    ``s_base`` is informational only; every model quantity is per-unit on
    the load's own base.
    """

    omega0: float = 2.0 * math.pi * 50.0
    dt: float = 0.01
    s_base: float = 100.0

    def __post_init__(self):
        if not self.omega0 > 0:
            raise DomainError(f"omega0 must be positive, got {self.omega0}")
        if not self.dt > 0:
            raise DomainError(f"dt must be positive, got {self.dt}")


@dataclass(frozen=True)
class IMParamsPhysical:
    """Original motor parameters ``[X, X', Td0, H2, Tm]``."""

    X: float
    Xp: float
    Td0: float
    H2: float
    Tm: float

    def validate(self) -> "IMParamsPhysical":
        if not self.Xp > 0:
            raise DomainError(f"Xp must be positive, got {self.Xp}")
        if not self.X > self.Xp:
            raise DomainError(f"X must exceed Xp (X={self.X}, Xp={self.Xp})")
        if not self.Td0 > 0 or not self.H2 > 0:
            raise DomainError("Td0 and H2 must be positive")
        if self.Tm < 0:
            raise DomainError(f"Tm must be non-negative, got {self.Tm}")
        return self


@dataclass(frozen=True)
class IMParamsTransformed:
    """Upper-stage decision vector ``D = [a, b, H2, Tm]``."""

    a: float
    b: float
    H2: float
    Tm: float

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.H2, self.Tm], dtype=float)

    @classmethod
    def from_array(cls, x) -> "IMParamsTransformed":
        a, b, h2, tm = (float(v) for v in x)
        return cls(a, b, h2, tm)

    def validate(self) -> "IMParamsTransformed":
        if not (self.a > 0 and self.b > 0 and self.H2 > 0):
            raise DomainError(f"a, b, H2 must be positive: {self}")
        if self.Tm < 0:
            raise DomainError(f"Tm must be non-negative, got {self.Tm}")
        return self


class IMState(NamedTuple):
    Fd: float
    Fq: float
    s: float


class PhasorDQ(NamedTuple):
    Vd: float
    Vq: float


@dataclass(frozen=True)
class ZIPParams:
    """ZIP coefficients. No sign constraints; identified values can be
    negative, and ``Qz`` carries the motor's ``1/X'`` term."""

    Pz: float = 0.0
    Pi: float = 0.0
    Pp: float = 0.0
    Qz: float = 0.0
    Qi: float = 0.0
    Qp: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=float)


@dataclass
class MeasurementSeries:
    """Uniformly sampled ``t, V, theta, P, Q`` records."""

    t: np.ndarray
    V: np.ndarray
    theta: np.ndarray
    P: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        for name in ("t", "V", "theta", "P", "Q"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def __len__(self) -> int:
        return len(self.t)

    def validate(self, rtol: float = 1e-6) -> "MeasurementSeries":
        n = len(self.t)
        if n < 2:
            raise DomainError("a measurement series needs at least 2 samples")
        for name in ("V", "theta", "P", "Q"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise DomainError(f"channel {name!r} has length {arr.size}, expected {n}")
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"channel {name!r} contains non-finite values")
        steps = np.diff(self.t)
        dt = steps[0]
        if not dt > 0 or np.any(np.abs(steps - dt) > rtol * max(dt, 1.0)):
            raise DomainError("t must be strictly increasing with constant spacing")
        if np.any(self.V <= 0):
            raise DomainError("V must be positive at every sample")
        return self

    def replace(self, **channels) -> "MeasurementSeries":
        data = {k: getattr(self, k) for k in ("t", "V", "theta", "P", "Q")}
        data.update(channels)
        return MeasurementSeries(**data)


def params_dict(obj) -> dict:
    return asdict(obj)


def transform_params(phys: IMParamsPhysical) -> IMParamsTransformed:
    """Collapse ``(X, X', Td0)`` into the rate constants ``(a, b)``."""
    if phys.X <= phys.Xp:
        raise DomainError(f"X must exceed Xp (X={phys.X}, Xp={phys.Xp}); a would be <= 0")
    phys.validate()
    a = (phys.X / phys.Xp - 1.0) / (phys.Td0 * phys.Xp)
    b = phys.X / (phys.Td0 * phys.Xp)
    return IMParamsTransformed(a, b, phys.H2, phys.Tm)


def polar_to_dq(V, theta):
    """Split a polar voltage into synchronous-frame d/q components.

    Works elementwise on arrays; scalars come back as a :class:`PhasorDQ`.
    """
    vd = V * np.cos(theta)
    vq = V * np.sin(theta)
    if np.ndim(vd) == 0:
        return PhasorDQ(float(vd), float(vq))
    return PhasorDQ(vd, vq)


def electrical_torque(state: IMState, v: PhasorDQ) -> float:
    return v.Vq * state.Fd - v.Vd * state.Fq


def im_derivatives(state: IMState, v: PhasorDQ, d: IMParamsTransformed,
                   cfg: SystemConfig) -> IMState:
    """State rates of the transformed motor."""
    Fd, Fq, s = state
    w = s * cfg.omega0
    dFd = -d.b * Fd + w * Fq + d.a * v.Vd
    dFq = -d.b * Fq - w * Fd + d.a * v.Vq
    ds = (d.Tm - v.Vq * Fd + v.Vd * Fq) / d.H2
    return IMState(dFd, dFq, ds)


def im_output(state: IMState, v: PhasorDQ) -> tuple[float, float]:
    """Motor ``(P, Q)`` without the ``V^2/X'`` term (that one lives in Qz)."""
    p = state.Fd * v.Vq - state.Fq * v.Vd
    q = -v.Vd * state.Fd - v.Vq * state.Fq
    return p, q


def im_original_model(state_orig, v: PhasorDQ, phys: IMParamsPhysical,
                      cfg: SystemConfig):
    """Rates and outputs of the untransformed third-order motor.

    ``state_orig`` is ``(Ed, Eq, s)``. Returns ``((dEd, dEq, ds), P, Q)``;
    Q includes the ``V^2/X'`` magnetising term.
    """
    if phys.Xp == 0:
        raise DomainError("Xp must be nonzero")
    Ed, Eq, s = state_orig
    X, Xp, Td0 = phys.X, phys.Xp, phys.Td0
    decay = X / (Td0 * Xp)
    gain = (X / Xp - 1.0) / Td0
    w = s * cfg.omega0
    te = (Ed * v.Vq - Eq * v.Vd) / Xp
    dEd = -decay * Ed + w * Eq + gain * v.Vd
    dEq = -decay * Eq - w * Ed + gain * v.Vq
    ds = (phys.Tm - te) / phys.H2
    p = te
    q = (v.Vd ** 2 + v.Vq ** 2) / Xp + (-v.Vd * Ed - v.Vq * Eq) / Xp
    return (dEd, dEq, ds), p, q


def zip_power(zip_: ZIPParams, V):
    """Static ``(P, Q)`` of the ZIP model at voltage magnitude ``V``."""
    p = zip_.Pz * V ** 2 + zip_.Pi * V + zip_.Pp
    q = zip_.Qz * V ** 2 + zip_.Qi * V + zip_.Qp
    return p, q
