"""Synthetic ambient excitation, measurement error and pre-filtering."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import DomainError
from .model import MeasurementSeries

# Ambient excitation multipliers per disturbance level. Amplitude x2.4 and
# x4.8 move the fluctuation SNR by +7.6 dB and +13.6 dB, so a fixed error
# level gives roughly 14, 22 and 28 dB across the three levels.
DISTURBANCE_LEVELS = {1: 1.0, 2: 2.4, 3: 4.8}

CHANNELS = ("V", "theta", "P", "Q")


@dataclass(frozen=True)
class AmbientSpec:
    """Low-pass filtered white-noise excitation at a load bus.

    ``noise_std`` is the standard deviation of the white noise *before*
    filtering; ``angle_ratio`` scales the (independent) angle noise relative
    to the magnitude noise, in rad per p.u.
    """

    duration: float = 10.0
    dt: float = 0.01
    v_mean: float = 1.0
    theta_mean: float = 0.1
    noise_std: float = 0.03
    cutoff_hz: float = 2.0
    seed: int = 0
    angle_ratio: float = 0.5

    def __post_init__(self):
        if not self.duration > 0:
            raise DomainError("duration must be positive")
        if not 0 < self.dt < 1.0 / (2.0 * self.cutoff_hz):
            raise DomainError(f"need 0 < dt < 1/(2*cutoff); got dt={self.dt}, cutoff={self.cutoff_hz}")
        if self.noise_std < 0:
            raise DomainError("noise_std must be non-negative")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration / self.dt)) + 1

    def at_level(self, level: int) -> "AmbientSpec":
        from dataclasses import replace
        if level not in DISTURBANCE_LEVELS:
            raise DomainError(f"disturbance level must be one of {sorted(DISTURBANCE_LEVELS)}, got {level}")
        return replace(self, noise_std=self.noise_std * DISTURBANCE_LEVELS[level])


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement error: a constant offset plus white random error."""

    target_snr_db: float = 14.0
    offset_fraction: float = 0.001
    seed: int = 0
    # V and theta are corrupted at target + margin; inf leaves them exact
    input_margin_db: float = math.inf

    def snr_for(self, channel: str) -> float:
        return self.target_snr_db + (self.input_margin_db if channel in ("V", "theta") else 0.0)

    def __post_init__(self):
        if not math.isfinite(self.target_snr_db):
            raise DomainError("target_snr_db must be finite")
        if math.isnan(self.input_margin_db) or self.input_margin_db < 0:
            raise DomainError("input_margin_db must be non-negative (inf leaves V and theta clean)")
        if self.offset_fraction < 0:
            raise DomainError("offset_fraction must be non-negative")


@dataclass(frozen=True)
class FaultSpec:
    """Rectangular voltage sag followed by exponential recovery."""

    t_fault: float = 1.0
    t_clear: float = 1.1
    v_sag: float = 0.8
    recovery_tau: float = 0.2

    def check(self, duration: float) -> "FaultSpec":
        if not 0 <= self.t_fault < self.t_clear < duration:
            raise DomainError("need 0 <= t_fault < t_clear < duration")
        if not 0 < self.v_sag < 1:
            raise DomainError("v_sag must lie in (0, 1)")
        if not self.recovery_tau > 0:
            raise DomainError("recovery_tau must be positive")
        return self


@functools.lru_cache(maxsize=32)
def _design(cutoff_hz: float, dt: float):
    if not 0 < dt < 1.0 / (2.0 * cutoff_hz):
        raise DomainError(f"cutoff {cutoff_hz} Hz is not below Nyquist for dt={dt}")
    return sps.butter(2, cutoff_hz, btype="low", fs=1.0 / dt)


def zero_phase_lowpass(x, cutoff_hz: float, dt: float) -> np.ndarray:
    """Second-order Butterworth run forward and backward."""
    b, a = _design(cutoff_hz, dt)
    x = np.asarray(x, dtype=float)
    if x.size <= 3 * max(len(a), len(b)):
        raise DomainError("series too short to filter")
    return sps.filtfilt(b, a, x)


def generate_ambient(spec: AmbientSpec):
    """Ambient ``(V, theta)`` series around ``(v_mean, theta_mean)``."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n_samples
    # filter a longer record and keep the middle: filtfilt's edge padding
    # would otherwise leave unfiltered amplitude at both ends
    pad = int(math.ceil(2.0 / (spec.cutoff_hz * spec.dt)))
    wv = rng.standard_normal(n + 2 * pad)
    wt = rng.standard_normal(n + 2 * pad)
    if spec.noise_std == 0:
        return np.full(n, spec.v_mean), np.full(n, spec.theta_mean)
    core = slice(pad, pad + n)
    V = spec.v_mean + spec.noise_std * zero_phase_lowpass(wv, spec.cutoff_hz, spec.dt)[core]
    theta = spec.theta_mean + spec.angle_ratio * spec.noise_std * zero_phase_lowpass(
        wt, spec.cutoff_hz, spec.dt)[core]
    return V, theta


def generate_fault_voltage(spec: FaultSpec, base: AmbientSpec):
    """Ambient trajectory with a sag to ``v_sag`` on ``[t_fault, t_clear]``
    and exponential recovery toward ``v_mean`` afterwards."""
    spec.check(base.duration)
    V, theta = generate_ambient(base)
    t = base.dt * np.arange(base.n_samples)
    eps = 1e-9 * base.dt
    during = (t >= spec.t_fault - eps) & (t <= spec.t_clear + eps)
    after = t > spec.t_clear + eps
    V = V.copy()
    V[during] = spec.v_sag
    V[after] += (spec.v_sag - base.v_mean) * np.exp(-(t[after] - spec.t_clear) / spec.recovery_tau)
    return V, theta


def snr_db(signal, noise) -> float:
    """``10*log10(sum(y^2) / sum(e^2))``."""
    y = np.asarray(signal, dtype=float)
    e = np.asarray(noise, dtype=float)
    if y.shape != e.shape:
        raise DomainError("signal and noise must have equal lengths")
    en = float(np.sum(e * e))
    if en <= 0:
        raise DomainError("noise has zero energy; SNR is undefined")
    return 10.0 * math.log10(float(np.sum(y * y)) / en)


def fluctuation(x) -> np.ndarray:
    """Ambient content of a channel: the series minus its mean."""
    x = np.asarray(x, dtype=float)
    return x - x.mean()


def case_snr_db(clean: MeasurementSeries, noisy: MeasurementSeries) -> float:
    """Window SNR: mean of the P-channel and Q-channel SNRs."""
    sp = snr_db(fluctuation(clean.P), noisy.P - clean.P)
    sq = snr_db(fluctuation(clean.Q), noisy.Q - clean.Q)
    return 0.5 * (sp + sq)


def estimate_snr_db(series: MeasurementSeries, cutoff_hz: float = 2.0) -> float:
    """Window SNR from the data alone: the low-passed P and Q stand in for the
    signal and the out-of-band remainder for the error. Only the random part
    of the error is visible, so this overestimates when offsets dominate."""
    out = []
    for ch in ("P", "Q"):
        y = getattr(series, ch)
        smooth = zero_phase_lowpass(y, cutoff_hz, series.dt)
        out.append(snr_db(fluctuation(smooth), y - smooth))
    return 0.5 * (out[0] + out[1])


def _channel_error(y: np.ndarray, target_db: float, offset_fraction: float,
                   sign: float, z: np.ndarray, name: str) -> np.ndarray:
    ambient = fluctuation(y)
    e_sig = float(np.sum(ambient * ambient))
    if e_sig <= 0:
        raise DomainError(f"channel {name!r} has no ambient content; SNR target is meaningless")
    n = y.size
    e_noise = e_sig / 10.0 ** (target_db / 10.0)
    offset = sign * offset_fraction * abs(float(y.mean()))
    # the offset may take at most half of the error energy
    cap = math.sqrt(0.5 * e_noise / n)
    offset = max(-cap, min(cap, offset))
    # solve sum((offset + c z)^2) = e_noise for c > 0
    zz = float(z @ z)
    zs = float(z.sum())
    qa, qb, qc = zz, 2.0 * offset * zs, n * offset * offset - e_noise
    c = (-qb + math.sqrt(qb * qb - 4.0 * qa * qc)) / (2.0 * qa)
    return offset + c * z


def measurement_error(series: MeasurementSeries, std: dict, offset: dict | None = None,
                      seed: int = 0) -> MeasurementSeries:
    """Add fixed-size errors: ``offset[ch] + std[ch] * N(0, 1)`` per channel."""
    rng = np.random.default_rng(seed)
    offset = offset or {}
    out = {}
    for ch in CHANNELS:
        z = rng.standard_normal(len(series))
        out[ch] = getattr(series, ch) + offset.get(ch, 0.0) + std.get(ch, 0.0) * z
    return series.replace(**out)


def inject_noise(series: MeasurementSeries, spec: NoiseSpec) -> MeasurementSeries:
    """Add measurement error to P and Q at ``spec.target_snr_db``; V and
    theta get ``target + input_margin_db`` (untouched when the margin is inf).

    The signal energy in the SNR is the channel's ambient content (mean
    removed); the error energy covers offset plus random part and matches the
    target exactly on the given window.
    """
    rng = np.random.default_rng(spec.seed)
    signs = np.where(rng.random(len(CHANNELS)) < 0.5, -1.0, 1.0)
    out = {}
    for ch, sign in zip(CHANNELS, signs):
        y = getattr(series, ch)
        z = rng.standard_normal(y.size)
        if math.isinf(spec.snr_for(ch)):
            out[ch] = y.copy()
            continue
        out[ch] = y + _channel_error(y, spec.snr_for(ch), spec.offset_fraction, sign, z, ch)
    return series.replace(**out)


def lowpass_filter(series: MeasurementSeries, cutoff_hz: float = 2.0) -> MeasurementSeries:
    """Zero-phase low-pass of all four channels; ``t`` is untouched."""
    dt = series.dt
    return series.replace(**{ch: zero_phase_lowpass(getattr(series, ch), cutoff_hz, dt)
                             for ch in CHANNELS})
