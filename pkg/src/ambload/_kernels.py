"""Compiled inner loops for the transformed motor.

Status codes: 0 ok, 1 divergence (state magnitude above the guard or
non-finite).
"""

import numpy as np
from numba import njit

EULER = 0
RK4 = 1


@njit(cache=True)
def _rates(fd, fq, s, vd, vq, a, b, h2, tm, omega0):
    w = s * omega0
    dfd = -b * fd + w * fq + a * vd
    dfq = -b * fq - w * fd + a * vq
    ds = (tm - vq * fd + vd * fq) / h2
    return dfd, dfq, ds


@njit(cache=True)
def integrate_motor(vd, vq, a, b, h2, tm, omega0, h, substeps, method,
                    fd0, fq0, s0, guard):
    """Integrate the transformed motor along a sampled voltage trajectory.

    The voltage is linearly interpolated between samples; ``substeps``
    internal steps of size ``h`` cover one sample interval. Returns the
    per-sample motor power, the per-sample state and a status code.
    """
    n = vd.shape[0]
    p = np.empty(n)
    q = np.empty(n)
    states = np.empty((n, 3))
    fd, fq, s = fd0, fq0, s0
    status = 0
    for k in range(n):
        if k > 0:
            v0d = vd[k - 1]
            v0q = vq[k - 1]
            dvd = (vd[k] - v0d) / substeps
            dvq = (vq[k] - v0q) / substeps
            for j in range(substeps):
                ud = v0d + j * dvd
                uq = v0q + j * dvq
                if method == EULER:
                    k1d, k1q, k1s = _rates(fd, fq, s, ud, uq, a, b, h2, tm, omega0)
                    fd += h * k1d
                    fq += h * k1q
                    s += h * k1s
                else:
                    md = ud + 0.5 * dvd
                    mq = uq + 0.5 * dvq
                    ed = ud + dvd
                    eq = uq + dvq
                    k1d, k1q, k1s = _rates(fd, fq, s, ud, uq, a, b, h2, tm, omega0)
                    k2d, k2q, k2s = _rates(fd + 0.5 * h * k1d, fq + 0.5 * h * k1q,
                                           s + 0.5 * h * k1s, md, mq, a, b, h2, tm, omega0)
                    k3d, k3q, k3s = _rates(fd + 0.5 * h * k2d, fq + 0.5 * h * k2q,
                                           s + 0.5 * h * k2s, md, mq, a, b, h2, tm, omega0)
                    k4d, k4q, k4s = _rates(fd + h * k3d, fq + h * k3q, s + h * k3s,
                                           ed, eq, a, b, h2, tm, omega0)
                    fd += h / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
                    fq += h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
                    s += h / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s)
            if not (abs(fd) <= guard and abs(fq) <= guard and abs(s) <= guard):
                status = 1
                p[k:] = np.nan
                q[k:] = np.nan
                states[k:, :] = np.nan
                return p, q, states, status
        p[k] = fd * vq[k] - fq * vd[k]
        q[k] = -vd[k] * fd - vq[k] * fq
        states[k, 0] = fd
        states[k, 1] = fq
        states[k, 2] = s
    return p, q, states, status
