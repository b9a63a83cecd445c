import math

import numpy as np
import pytest

from ambload.cases import make_case
from ambload.model import IMParamsPhysical, SystemConfig


@pytest.fixture(scope="session")
def cfg():
    return SystemConfig()


@pytest.fixture(scope="session")
def clean_case():
    return make_case(11)


@pytest.fixture(scope="session")
def noisy_case():
    return make_case(12, snr_db=14.0)


def random_physical(rng, tm_fraction=0.5, v=1.0):
    """Physical motor with Tm a fraction of pull-out torque at voltage ``v``."""
    xp = rng.uniform(0.1, 0.3)
    x = xp * rng.uniform(5.0, 20.0)
    td0 = rng.uniform(0.3, 1.5)
    h2 = rng.uniform(0.5, 3.0)
    a = (x / xp - 1.0) / (td0 * xp)
    b = x / (td0 * xp)
    tm = tm_fraction * a * v * v / (2.0 * b)
    return IMParamsPhysical(x, xp, td0, h2, tm)


def ambient_voltage(rng, n=1001, std=0.01):
    """Smooth random voltage around 1 p.u. without scipy (cumulative sine mix)."""
    t = 0.01 * np.arange(n)
    V = np.ones(n)
    theta = np.full(n, 0.1)
    for _ in range(6):
        f = rng.uniform(0.1, 2.0)
        V += std * rng.standard_normal() * np.sin(2 * math.pi * f * t + rng.uniform(0, 6.3))
        theta += std * rng.standard_normal() * np.sin(2 * math.pi * f * t + rng.uniform(0, 6.3))
    return V, theta


def exact_normal_equations(V, y):
    """``(X^T X)^{-1} X^T y`` for ``X = [V^2, V, 1]`` in rational arithmetic."""
    from fractions import Fraction

    vs = [Fraction(float(v)) for v in V]
    ys = [Fraction(float(t)) for t in y]
    cols = [[v * v for v in vs], vs, [Fraction(1)] * len(vs)]
    A = [[sum(a * b for a, b in zip(ci, cj)) for cj in cols] for ci in cols]
    r = [sum(a * b for a, b in zip(ci, ys)) for ci in cols]
    for i in range(3):
        for j in range(i + 1, 3):
            f = A[j][i] / A[i][i]
            A[j] = [a - f * b for a, b in zip(A[j], A[i])]
            r[j] -= f * r[i]
    x = [Fraction(0)] * 3
    for i in reversed(range(3)):
        x[i] = (r[i] - sum(A[i][k] * x[k] for k in range(i + 1, 3))) / A[i][i]
    return np.array([float(v) for v in x])


VERDICTS = []


def verdict(number: int, ok: bool, detail: str) -> None:
    """Record one acceptance line; printed again in the terminal summary."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    VERDICTS.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
