import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ambload.cases import make_case
from ambload.errors import DomainError, RankDeficientError
from ambload.model import IMParamsTransformed, SystemConfig, ZIPParams, zip_power
from ambload.regression import Objective, WindowPolicy, evaluate_candidate, regress_zip
from ambload.simulate import CompositeLoad, simulate_composite
from conftest import ambient_voltage, exact_normal_equations, random_physical


def test_matches_normal_equations_on_random_instances():
    rng = np.random.default_rng(0)
    worst_coef = worst_fit = 0.0
    for _ in range(20):
        V = 1.0 + rng.uniform(0.005, 0.05) * rng.standard_normal(300)
        yp, yq = rng.standard_normal((2, 300))
        out = regress_zip(yp, yq, V)
        for got, y in (([out.zip.Pz, out.zip.Pi, out.zip.Pp], yp), ([out.zip.Qz, out.zip.Qi, out.zip.Qp], yq)):
            ref = exact_normal_equations(V, y)
            worst_coef = max(worst_coef, np.abs(np.array(got) - ref).max() / np.abs(ref).max())
        X = np.column_stack([V ** 2, V, np.ones_like(V)])
        worst_fit = max(worst_fit, np.abs((yp - out.r_p) - X @ exact_normal_equations(V, yp)).max())
    assert worst_coef < 1e-8
    assert worst_fit < 1e-10


@settings(max_examples=50, deadline=None)
@given(c=st.lists(st.floats(-10, 10), min_size=6, max_size=6), seed=st.integers(0, 10_000))
def test_exact_quadratic_is_recovered(c, seed):
    V = 1.0 + 0.03 * np.random.default_rng(seed).standard_normal(500)
    z = ZIPParams(*c)
    p, q = zip_power(z, V)
    out = regress_zip(p, q, V)
    assert np.allclose(out.zip.as_array(), z.as_array(), atol=1e-9, rtol=0)
    assert np.abs(out.r_p).max() < 1e-9 and np.abs(out.r_q).max() < 1e-9


def test_hand_quadratic():
    V = np.linspace(0.95, 1.05, 50)
    out = regress_zip(2 * V ** 2 - 3 * V + 1, np.zeros(50), V)
    assert (out.zip.Pz, out.zip.Pi, out.zip.Pp) == pytest.approx((2, -3, 1), abs=1e-9)
    assert out.l == 50 and not out.low_excitation


def test_ols_properties_on_noise():
    rng = np.random.default_rng(2)
    V = 1.0 + 0.01 * rng.standard_normal(1000)
    y = rng.standard_normal(1000)
    out = regress_zip(y, y, V)
    fitted = y - out.r_p
    assert np.var(fitted) <= np.var(y)
    assert abs(out.r_p.mean()) < 1e-10
    X = np.column_stack([np.ones_like(V), V, V * V])
    assert np.abs(X.T @ out.r_p).max() < 1e-8


def test_residual_is_optimal_under_perturbation():
    rng = np.random.default_rng(4)
    V = 1.0 + 0.02 * rng.standard_normal(300)
    y = rng.standard_normal(300)
    out = regress_zip(y, y, V)
    base = np.sum(out.r_p ** 2)
    X = np.column_stack([V ** 2, V, np.ones_like(V)])
    coef = np.array([out.zip.Pz, out.zip.Pi, out.zip.Pp])
    for _ in range(20):
        other = coef + 1e-3 * rng.standard_normal(3)
        assert np.sum((y - X @ other) ** 2) > base


def test_rank_deficient_window():
    V = np.full(100, 1.0)
    with pytest.raises(RankDeficientError):
        regress_zip(np.ones(100), np.ones(100), V)
    out = regress_zip(np.full(100, 2.0), np.full(100, -1.0), V, fallback=True)
    assert out.low_excitation
    assert out.zip.Pp == pytest.approx(2.0) and out.zip.Pz == 0.0 and out.zip.Pi == 0.0
    assert out.zip.Qp == pytest.approx(-1.0)
    with pytest.raises(DomainError):
        regress_zip(np.ones(5), np.ones(5), np.ones(6))


def test_window_policy_indices():
    assert WindowPolicy().indices(1001, 0.01) == (200, 300, 1000)
    i_pred, i0, i1 = WindowPolicy(warmup_skip=0.5, fit_start=1.0, fit_end=5.0).indices(1001, 0.01)
    assert (i_pred, i0, i1) == (50, 100, 500)
    with pytest.raises(DomainError):
        WindowPolicy().indices(900, 0.01)
    with pytest.raises(DomainError):
        WindowPolicy(warmup_skip=4.0)
    with pytest.raises(DomainError):
        WindowPolicy(fit_start=5.0, fit_end=5.0)


def test_objective_at_truth(clean_case):
    data = clean_case.measured
    d = clean_case.load.motor
    of, os_, out = evaluate_candidate(d, data)
    assert out.l == 700
    assert of < 1e-8
    # the static P part over the fit window is recovered; single coefficients
    # are collinear on a narrow voltage band
    V = data.V[300:1000]
    p_fit, _ = zip_power(os_, V)
    p_true, _ = zip_power(clean_case.load.zip, V)
    assert np.abs(p_fit - p_true).max() < 1e-4


def test_objective_far_from_truth(clean_case):
    data = clean_case.measured
    d = clean_case.load.motor
    far = IMParamsTransformed(20.0, 8.0, 2.5, 0.3 * d.Tm)
    of_true = evaluate_candidate(d, data)[0]
    of_far = evaluate_candidate(far, data)[0]
    assert of_far >= 100 * max(of_true, 1e-12)


def test_constant_shift_moves_only_pp(noisy_case):
    data = noisy_case.measured
    d = IMParamsTransformed(40.0, 12.0, 1.5, 0.5 * noisy_case.load.motor.Tm)
    of1, z1, _ = evaluate_candidate(d, data)
    of2, z2, _ = evaluate_candidate(d, data.replace(P=data.P + 0.7))
    assert of2 == pytest.approx(of1, rel=1e-8)
    assert z2.Pp - z1.Pp == pytest.approx(0.7, rel=1e-8)
    assert np.allclose([z2.Pz, z2.Pi, z2.Qz, z2.Qi, z2.Qp], [z1.Pz, z1.Pi, z1.Qz, z1.Qi, z1.Qp],
                       rtol=1e-6, atol=1e-8)


def test_physical_load_qz_includes_reactance():
    rng = np.random.default_rng(5)
    phys = random_physical(rng, 0.4, v=0.95)
    V, th = ambient_voltage(rng, std=0.01)
    zip_ = ZIPParams(0.4, 0.3, 0.2, 0.3, 0.1, 0.1)
    data = simulate_composite(CompositeLoad(phys, zip_), V, th, SystemConfig())
    of, z, _ = evaluate_candidate(CompositeLoad(phys, zip_).transformed().motor, data)
    assert of < 1e-8
    Vw = V[300:1000]
    q_fit = z.Qz * Vw ** 2 + z.Qi * Vw + z.Qp
    q_ref = (zip_.Qz + 1.0 / phys.Xp) * Vw ** 2 + zip_.Qi * Vw + zip_.Qp
    assert np.abs(q_fit - q_ref).max() < 1e-4


def test_objective_is_nonnegative_and_counts(clean_case):
    obj = Objective(clean_case.measured)
    rng = np.random.default_rng(1)
    for _ in range(5):
        d = IMParamsTransformed(rng.uniform(20, 70), rng.uniform(5, 25), rng.uniform(0.5, 3),
                                0.2 * clean_case.load.motor.Tm)
        assert obj.value(d) >= 0.0
    assert obj.n_evals == 5
    bad = IMParamsTransformed(10.0, 30.0, 1.0, 100.0)
    assert obj.value(bad, penalty=1e3) == 1e3


def test_filtered_objective_exact_on_clean_data(clean_case):
    obj = Objective(clean_case.measured, lowpass_hz=2.0)
    assert obj.value(clean_case.load.motor) < 1e-10
    with pytest.raises(DomainError):
        Objective(clean_case.measured, cfg=SystemConfig(dt=0.02))


def test_objective_with_noise_prefers_truth():
    case = make_case(21, snr_db=14.0)
    obj = Objective(case.measured, lowpass_hz=2.0)
    d = case.load.motor
    worse = IMParamsTransformed(d.a * 1.3, d.b, d.H2, d.Tm)
    assert obj.value(d) < obj.value(worse)
