import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cavityobs.disturbances import DetuningProfileConfig, PhaseDriftProfileConfig
from cavityobs.harness import Scenario, run_trial
from cavityobs.observers import (DESCENT_SIGN, SKIP_DETUNING, SKIP_FWD, SKIP_REC, EstimatorState,
                                 Measurements, ObserverGains, ObserverVariant, calibrate_descent_sign,
                                 descent_sign_check, detuning_step_gain, detuning_update, eso_error_map,
                                 eso_innovation, eso_predict, eso_update, fwd_drift_update, observer_step,
                                 predict_reflected, rec_drift_update)
from cavityobs.phasor import J, rot_exact
from cavityobs.plant import CavityParams, measure_reflected, system_matrix

P = CavityParams()
G = ObserverGains()
WH = P.omega_half


def test_gain_defaults_and_variants():
    assert (G.alpha_x, G.alpha_d, G.alpha_omega, G.alpha_fwd, G.alpha_rec, G.kappa) == \
        (0.1, 1e-4, 1.0, 0.9754, 0.7316, 200.0)
    std = ObserverGains.standard()
    assert (std.alpha_x, std.alpha_d) == (0.1, 0.3)
    forced = G.for_variant(ObserverVariant.STANDARD)
    assert forced.alpha_omega == forced.alpha_fwd == forced.alpha_rec == 0.0


def test_gain_validation():
    with pytest.raises(ValueError):
        ObserverGains(alpha_x=-0.1)
    with pytest.raises(ValueError):
        ObserverGains(alpha_fwd=1.5).check_smoothing()


def test_eso_predict_examples():
    assert not eso_predict(EstimatorState(), np.zeros(2), P).any()
    est = EstimatorState(x_hat=np.array([1.0, 0.0]))
    np.testing.assert_allclose(eso_predict(est, np.zeros(2), P), [0.84292, 0], atol=1e-5)
    np.testing.assert_allclose(eso_predict(EstimatorState(), np.array([1.0, 0.0]), P), [0.15708, 0], atol=1e-5)


def test_eso_innovation_examples():
    xp = np.array([0.3, 0.4])
    assert not eso_innovation(xp, xp).any()
    np.testing.assert_allclose(eso_innovation(np.array([1.0, 0.0]), np.array([0.9, 0.0])), [0.1, 0], atol=1e-15)
    y = rot_exact(0.2) @ xp
    np.testing.assert_allclose(eso_innovation(rot_exact(-0.2) @ y, xp), [0, 0], atol=1e-15)


def test_eso_update_examples():
    est = EstimatorState(d_hat=np.array([0.1, 0.2]))
    xp = np.array([0.5, 0.5])
    x_hat, d_hat = eso_update(est, xp, np.zeros(2), G)
    np.testing.assert_array_equal(x_hat, xp)
    np.testing.assert_array_equal(d_hat, est.d_hat)
    x_hat, _ = eso_update(EstimatorState(), np.zeros(2), np.array([1.0, 0.0]), G)
    np.testing.assert_allclose(x_hat, [0.1, 0])


def test_fwd_drift_examples():
    u = np.array([1.0, 0.0])
    est = EstimatorState(phi_fwd_hat=0.02)
    phi, skipped = fwd_drift_update(est, rot_exact(0.02) @ u, u, G)
    assert phi == pytest.approx(0.02, abs=1e-15) and not skipped
    phi, _ = fwd_drift_update(EstimatorState(), rot_exact(0.02) @ u, u, G)
    assert phi == pytest.approx(0.019508, abs=1e-12)


def test_fwd_drift_skips_degenerate_drive():
    phi, skipped = fwd_drift_update(EstimatorState(phi_fwd_hat=0.3), np.zeros(2), np.array([1.0, 0.0]), G)
    assert skipped and phi == 0.3


@pytest.mark.parametrize("alpha", [0.9754, 0.7316, 0.3, 1.0])
def test_drift_geometric_convergence(alpha):
    gains = ObserverGains(alpha_fwd=alpha)
    u = np.array([0.7, 0.2])
    est = EstimatorState()
    for k in range(1, 30):
        est.phi_fwd_hat, _ = fwd_drift_update(est, rot_exact(0.02) @ u, u, gains)
        assert abs(est.phi_fwd_hat - 0.02) == pytest.approx((1 - alpha) ** k * 0.02, abs=1e-15)


def test_literal_drift_form_accumulates():
    u = np.array([1.0, 0.0])
    est = EstimatorState()
    for _ in range(5):
        est.phi_fwd_hat, _ = fwd_drift_update(est, rot_exact(0.02) @ u, u, G, literal=True)
    assert est.phi_fwd_hat == pytest.approx(5 * 0.9754 * 0.02)


def test_predict_reflected_examples():
    u = np.array([1.0, 0.0])
    np.testing.assert_allclose(predict_reflected(u, 0.0, ObserverGains(kappa=1.0), P), [0, 0])
    np.testing.assert_allclose(predict_reflected(u, 0.0, G, P), [-199, 0])
    # (I - J)^-1 = (I + J)/2, so the steady field is (0.5, 0.5) and the reflection (0.5, -0.5)
    np.testing.assert_allclose(predict_reflected(u, WH, ObserverGains(kappa=1.0), P), [0.5, -0.5], atol=1e-15)


def test_detuning_update_examples():
    u = np.array([0.8, 0.3])
    est = EstimatorState(delta_omega_hat=1234.0)
    refl = predict_reflected(u, 1234.0, G, P)
    assert detuning_update(est, refl, u, G, P)[0] == 1234.0
    # innovation parallel to u is orthogonal to J u
    assert detuning_update(est, refl + 0.01 * u, u, G, P)[0] == pytest.approx(1234.0, abs=1e-9)


def test_detuning_update_skips_without_coupling_or_drive():
    est = EstimatorState(delta_omega_hat=5.0)
    assert detuning_update(est, np.ones(2), np.zeros(2), G, P) == (5.0, True)
    assert detuning_update(est, np.ones(2), np.ones(2), ObserverGains(kappa=0.0), P) == (5.0, True)


def test_detuning_step_gain_scales_with_bandwidth():
    u = np.array([2.0, 0.0])
    assert detuning_step_gain(u, G, P) == pytest.approx(P.ts * WH ** 2 / (200 * 4))


def _frozen_plant_errors(dw, n=200):
    u = np.array([1.0, 0.0])
    x_ss = np.linalg.solve(np.eye(2) - dw / WH * J, u)
    refl = measure_reflected(u, x_ss, P.kappa)
    est = EstimatorState()
    errs = []
    for _ in range(n):
        est.delta_omega_hat, _ = detuning_update(est, refl, u, G, P)
        errs.append(abs(est.delta_omega_hat - dw))
    return np.array(errs)


@pytest.mark.parametrize("dw", [2 * math.pi * 500, -2 * math.pi * 500, 2 * math.pi * 3000])
def test_detuning_frozen_plant_monotone(dw):
    errs = _frozen_plant_errors(dw)
    assert np.all(np.diff(errs) <= 1e-9 * abs(dw))
    assert errs[-1] < 0.01 * abs(dw)


def test_descent_sign_calibration():
    assert calibrate_descent_sign() == DESCENT_SIGN
    assert descent_sign_check(DESCENT_SIGN, 20).all()
    assert not descent_sign_check(-DESCENT_SIGN, 20).any()


def test_rec_drift_examples():
    xp = np.array([0.6, 0.1])
    phi, skipped = rec_drift_update(EstimatorState(), xp, xp, G)
    assert phi == 0.0 and not skipped
    phi, _ = rec_drift_update(EstimatorState(), rot_exact(0.01) @ xp, xp, G)
    assert phi == pytest.approx(0.007316, abs=1e-12)
    phi, skipped = rec_drift_update(EstimatorState(phi_rec_hat=0.2), np.zeros(2), xp, G)
    assert skipped and phi == 0.2


def test_rec_drift_geometric_with_accurate_prediction():
    xp = np.array([1.0, 0.0])
    est = EstimatorState()
    for k in range(1, 20):
        est.phi_rec_hat, _ = rec_drift_update(est, rot_exact(0.015) @ xp, xp, G)
        assert abs(est.phi_rec_hat - 0.015) == pytest.approx((1 - 0.7316) ** k * 0.015, abs=1e-15)


def test_observer_step_zero_everything():
    meas = Measurements(np.zeros(2), np.zeros(2), np.zeros(2))
    for variant in ObserverVariant:
        new, diag = observer_step(EstimatorState(), meas, np.zeros(2), G, variant, P)
        assert not new.x_hat.any() and not new.d_hat.any()
        assert new.phi_fwd_hat == new.phi_rec_hat == new.delta_omega_hat == 0.0
        assert diag.innovation_norm == 0.0
    new, diag = observer_step(EstimatorState(), meas, np.zeros(2), G, ObserverVariant.PROPOSED, P)
    assert diag.skip == SKIP_FWD | SKIP_DETUNING | SKIP_REC


def test_standard_variant_ignores_drift_channels():
    u = np.array([1.0, 0.0])
    meas = Measurements(np.array([0.1, 0.05]), rot_exact(0.3) @ u, np.array([-5.0, 3.0]))
    gains = ObserverGains.standard()
    new, diag = observer_step(EstimatorState(), meas, u, gains, ObserverVariant.STANDARD, P)
    assert new.phi_fwd_hat == new.phi_rec_hat == new.delta_omega_hat == 0.0
    assert diag.skip == 0


def test_standard_variant_absorbs_receiver_rotation_in_disturbance():
    sc = Scenario.quiet(phase_rec=PhaseDriftProfileConfig.zero(0.01))
    rec = run_trial(0, sc, "standard")
    assert not rec["phi_rec_hat"].any()
    # the pickup is rotated by 0.01 rad, so the disturbance estimate carries the quadrature offset
    d = rec.phasor("dhat")[-1]
    x = rec.x[-1]
    offset = (np.eye(2) - system_matrix(P, 0.0)) @ (rot_exact(0.01) @ x - x)
    np.testing.assert_allclose(d, offset, atol=1e-6)


def test_proposed_constant_drifts_all_estimates_within_one_percent():
    dw = 2 * math.pi * 300
    sc = Scenario.quiet(phase_fwd=PhaseDriftProfileConfig.zero(0.02), phase_rec=PhaseDriftProfileConfig.zero(0.015),
                        detuning=DetuningProfileConfig.zero(dw))
    rec = run_trial(0, sc, "proposed")
    k = round(sc.macropulse.flattop_end / P.ts) - 1
    assert rec["phi_fwd_hat"][k] == pytest.approx(0.02, rel=0.01)
    assert rec["phi_rec_hat"][k] == pytest.approx(0.015, rel=0.01)
    assert rec["dw_hat"][k] == pytest.approx(dw, rel=0.01)
    assert np.linalg.norm(rec.phasor("xhat")[k] - rec.x[k]) <= 0.01 * np.linalg.norm(rec.x[k])
    assert np.abs(rec.phasor("dhat")[k]).max() < 1e-6


def test_eso_error_map_is_stable():
    for gains in (ObserverGains.proposed(), ObserverGains.standard()):
        for dw in (0.0, 2 * math.pi * 1000, 0.2 * WH):
            rho = np.abs(np.linalg.eigvals(eso_error_map(gains, system_matrix(P, dw)))).max()
            assert rho < 1


@given(st.floats(-0.5, 0.5), st.floats(0.1, 3.0), st.floats(-math.pi, math.pi))
def test_detuning_fixed_point(eps, mag, theta):
    u = mag * np.array([math.cos(theta), math.sin(theta)])
    dw = eps * WH
    refl = predict_reflected(u, dw, G, P)
    new, _ = detuning_update(EstimatorState(delta_omega_hat=dw), refl, u, G, P)
    assert new == pytest.approx(dw, abs=1e-6 * WH)
