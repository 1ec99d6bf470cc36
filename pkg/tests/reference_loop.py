"""Closed loop composed from the public per-step functions.

Slow, but independent of both kernel backends; used as a parity oracle.
"""

import numpy as np

from cavityobs.controller import control_step
from cavityobs.harness import Scenario, TruthRealization
from cavityobs.kernel import COL, COLUMNS
from cavityobs.observers import EstimatorState, Measurements, ObserverVariant, observer_step
from cavityobs.phasor import rot_exact
from cavityobs.plant import TruthState, measure_pickup, step_truth


def reference_loop(scenario: Scenario, truth: TruthRealization, variant) -> np.ndarray:
    variant = ObserverVariant(variant)
    params, opts = scenario.cavity, scenario.options
    gains = scenario.gains(variant)
    n = len(truth.delta_omega)
    out = np.full((n, len(COLUMNS)), np.nan)
    x = np.zeros(2)
    u = np.zeros(2)
    est = EstimatorState()
    pf_prev = truth.phi_fwd[0]
    for k in range(n):
        y = measure_pickup(x, truth.phi_rec[k]) + truth.noise_pickup[k]
        fwd_true = rot_exact(pf_prev) @ u
        meas = Measurements(pickup=y, forward=fwd_true + truth.noise_forward[k],
                            reflected=fwd_true - params.kappa * x + truth.noise_reflected[k])
        est, diag = observer_step(est, meas, u, gains, variant, params, literal_drift=opts.literal_drift,
                                  small_angle=opts.small_angle, descent_sign=opts.descent_sign,
                                  eps_u=opts.eps_u)
        x_star = truth.ref[k] + truth.noise_reference[k]
        x_star_next = truth.ref[k + 1] + truth.noise_reference[k]
        cmd = control_step(est, x_star, x_star_next, scenario.weights, params, opts.small_angle)
        u = cmd.u_total
        row = out[k]
        row[[COL["x_i"], COL["x_q"]]] = x
        row[[COL["y_i"], COL["y_q"]]] = y
        row[[COL["fwd_i"], COL["fwd_q"]]] = meas.forward
        row[[COL["refl_i"], COL["refl_q"]]] = meas.reflected
        row[[COL["xpred_i"], COL["xpred_q"]]] = diag.x_pred
        row[[COL["xhat_i"], COL["xhat_q"]]] = est.x_hat
        row[[COL["dhat_i"], COL["dhat_q"]]] = est.d_hat
        row[COL["phi_fwd_hat"]] = est.phi_fwd_hat
        row[COL["phi_rec_hat"]] = est.phi_rec_hat
        row[COL["dw_hat"]] = est.delta_omega_hat
        row[[COL["uff_i"], COL["uff_q"]]] = cmd.u_ff
        row[[COL["ufb_i"], COL["ufb_q"]]] = cmd.u_fb
        row[[COL["u_i"], COL["u_q"]]] = u
        row[COL["innov_norm"]] = diag.innovation_norm
        row[COL["skip"]] = diag.skip
        state = TruthState(x=x, phi_fwd=truth.phi_fwd[k], delta_omega=truth.delta_omega[k],
                           d=truth.disturbance[k])
        x = step_truth(state, u, params, opts.small_angle)
        pf_prev = truth.phi_fwd[k]
    return out
