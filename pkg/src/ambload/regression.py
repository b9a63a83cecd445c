"""Lower stage: motor power prediction, ZIP regression and the objective.

For a candidate motor ``D`` the motor power is predicted from the measured
voltage, the remainder of the measured power is regressed on ``[1, V, V^2]``
and the mean squared regression residual is the objective ``OF(D)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import AmbLoadError, DomainError, RankDeficientError
from .model import IMParamsTransformed, MeasurementSeries, SystemConfig, ZIPParams
from .simulate import SimOptions, predict_im_power

COND_LIMIT = 1e12


@dataclass
class RegressionOutcome:
    zip: ZIPParams
    r_p: np.ndarray
    r_q: np.ndarray
    l: int
    low_excitation: bool = False


@dataclass(frozen=True)
class WindowPolicy:
    """Which part of the window feeds the regression.

    Prediction starts ``warmup_skip`` seconds before ``fit_start`` (from an
    assumed equilibrium) and the samples in ``[fit_start, fit_end)`` are
    fitted. Times are relative to the first sample.
    """

    warmup_skip: float = 1.0
    fit_start: float = 3.0
    fit_end: float = 10.0

    def __post_init__(self):
        if self.warmup_skip < 0:
            raise DomainError("warmup_skip must be non-negative")
        if not self.fit_start < self.fit_end:
            raise DomainError("fit_start must precede fit_end")
        if self.fit_start - self.warmup_skip < 0:
            raise DomainError("prediction would start before the data window")

    def indices(self, n: int, dt: float) -> tuple[int, int, int]:
        """``(predict_start, fit_start, fit_stop)`` sample indices."""
        i_pred = int(round((self.fit_start - self.warmup_skip) / dt))
        i0 = int(round(self.fit_start / dt))
        i1 = int(round(self.fit_end / dt))
        if i1 > n:
            raise DomainError(
                f"fit_end={self.fit_end} s lies beyond the data window ({(n - 1) * dt:.6g} s)")
        if i1 - i0 < 3:
            raise DomainError("fit window holds fewer than 3 samples")
        return i_pred, i0, i1


class ZipBasis:
    """Orthogonal factorisation of ``[1, V, V^2]`` for one voltage window.

    ``V2`` overrides the quadratic column (used when it has been filtered
    separately from ``V``).
    """

    def __init__(self, V, V2=None, cond_limit: float = COND_LIMIT):
        V = np.asarray(V, dtype=float)
        if V.ndim != 1 or V.size < 3:
            raise DomainError("ZIP regression needs at least 3 samples")
        self.V = V
        V2 = V * V if V2 is None else np.asarray(V2, dtype=float)
        self.X = np.column_stack([np.ones_like(V), V, V2])
        self.cond = float(np.linalg.cond(self.X))
        self.rank_ok = bool(np.isfinite(self.cond) and self.cond <= cond_limit)
        if self.rank_ok:
            self.Q, self.R = np.linalg.qr(self.X)
        else:
            self.Q = np.full((V.size, 1), 1.0 / np.sqrt(V.size))
            self.R = np.array([[np.sqrt(V.size)]])

    def fit(self, y: np.ndarray, strict: bool = True):
        """Coefficients ``[const, V, V^2]`` and residuals; ``y`` may have
        several columns."""
        if not self.rank_ok and strict:
            raise RankDeficientError(
                f"basis [1, V, V^2] has condition number {self.cond:.3g} > {COND_LIMIT:g}; "
                "the window lacks voltage excitation")
        qty = self.Q.T @ y
        coef = solve_triangular(self.R, qty)
        resid = y - self.Q @ qty
        if not self.rank_ok:
            coef = np.vstack([coef, np.zeros((2,) + coef.shape[1:])])
        return coef, resid


def _outcome(coef, resid, low) -> RegressionOutcome:
    pp, pi, pz = coef[:, 0]
    qp, qi, qz = coef[:, 1]
    zip_ = ZIPParams(Pz=pz, Pi=pi, Pp=pp, Qz=qz, Qi=qi, Qp=qp)
    return RegressionOutcome(zip_, resid[:, 0].copy(), resid[:, 1].copy(), resid.shape[0], low)


def regress_zip(residual_P, residual_Q, V, fallback: bool = False) -> RegressionOutcome:
    """Least squares of the static power on ``[1, V, V^2]``, per channel.

    With ``fallback=True`` a rank-deficient basis is replaced by the constant
    column and the outcome is flagged ``low_excitation``; otherwise
    :class:`RankDeficientError` is raised.
    """
    basis = ZipBasis(V)
    y = np.column_stack([np.asarray(residual_P, float), np.asarray(residual_Q, float)])
    if y.shape[0] != basis.V.size:
        raise DomainError("residual series and V must have equal lengths")
    coef, resid = basis.fit(y, strict=not fallback)
    return _outcome(coef, resid, not basis.rank_ok)


class Objective:
    """``OF(D)`` and ``OS(D)`` for one measurement window.

    Everything that does not depend on ``D`` (window slicing, the regression
    basis) is prepared once so repeated evaluations stay cheap.
    """

    def __init__(self, data: MeasurementSeries, policy: WindowPolicy | None = None,
                 cfg: SystemConfig | None = None, lowpass_hz: float | None = None):
        data.validate()
        self.policy = policy or WindowPolicy()
        self.cfg = cfg or SystemConfig(dt=data.dt)
        if not np.isclose(self.cfg.dt, data.dt, rtol=1e-9):
            raise DomainError(f"config dt={self.cfg.dt} differs from data spacing {data.dt}")
        self.data = data
        self.lowpass_hz = lowpass_hz
        i_pred, i0, i1 = self.policy.indices(len(data), data.dt)
        # a filtered prediction has to share the measurement's trailing edge
        self._pred = slice(i_pred, i1 if lowpass_hz is None else len(data))
        self._fit = slice(i0 - i_pred, i1 - i_pred)
        self.V = data.V[self._pred]
        self.theta = data.theta[self._pred]
        if lowpass_hz is None:
            v_fit, p_fit, q_fit = data.V[i0:i1], data.P[i0:i1], data.Q[i0:i1]
            self.basis = ZipBasis(v_fit)
        else:
            # measurements and model outputs go through the same filter
            filt = self._filter
            v_fit = filt(data.V)[i0:i1]
            p_fit, q_fit = filt(data.P)[i0:i1], filt(data.Q)[i0:i1]
            self.basis = ZipBasis(v_fit, filt(data.V ** 2)[i0:i1])
        self.y = np.column_stack([p_fit, q_fit])
        self.l = i1 - i0
        self.n_evals = 0

    def _filter(self, x):
        from .signals import zero_phase_lowpass
        return zero_phase_lowpass(x, self.lowpass_hz, self.data.dt)

    @property
    def low_excitation(self) -> bool:
        return not self.basis.rank_ok

    def evaluate(self, d: IMParamsTransformed):
        """``(OF, OS, RegressionOutcome)``; raises on infeasible or
        divergent candidates."""
        self.n_evals += 1
        p_im, q_im = predict_im_power(d, self.V, self.theta, self.cfg, SimOptions())
        if self.lowpass_hz is not None:
            p_im, q_im = self._filter(p_im), self._filter(q_im)
        rhs = self.y - np.column_stack([p_im[self._fit], q_im[self._fit]])
        coef, resid = self.basis.fit(rhs, strict=False)
        out = _outcome(coef, resid, self.low_excitation)
        of = float(np.sum(resid * resid)) / self.l
        return of, out.zip, out

    def value(self, d: IMParamsTransformed, penalty: float | None = None) -> float:
        """Objective only. Failed evaluations return ``penalty`` when given."""
        try:
            return self.evaluate(d)[0]
        except AmbLoadError:
            if penalty is None:
                raise
            return penalty


def evaluate_candidate(d: IMParamsTransformed, data: MeasurementSeries,
                       policy: WindowPolicy | None = None, cfg: SystemConfig | None = None):
    """One-shot ``(OF, OS, RegressionOutcome)`` for candidate ``d``."""
    return Objective(data, policy, cfg).evaluate(d)
