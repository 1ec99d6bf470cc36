"""Field/disturbance ESO plus the forward-drift, detuning and receiver-drift observers.

One call to :func:`observer_step` consumes the measurements taken at sample
``k`` (pickup, forward monitor of the drive applied over ``[k-1, k)``, and
reflected monitor) together with the command ``u_{k-1}``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .phasor import I2, J, angle, rot_exact, rotation, wrap_angle
from .plant import CavityParams

#: Magnitude floor (normalized volts) below which phasor angles are not trusted.
EPS_U = 1e-6

#: Sign that turns the reflected-innovation correlation into a descent step on
#: ``||r_refl||^2``; established by :func:`calibrate_descent_sign`.
DESCENT_SIGN = -1.0

SKIP_FWD = 1
SKIP_DETUNING = 2
SKIP_REC = 4


class ObserverVariant(str, enum.Enum):
    PROPOSED = "proposed"
    STANDARD = "standard"


@dataclass(frozen=True)
class ObserverGains:
    alpha_x: float = 0.1
    alpha_d: float = 1e-4
    alpha_omega: float = 1.0
    alpha_fwd: float = 0.9754
    alpha_rec: float = 0.7316
    kappa: float = 200.0

    def __post_init__(self):
        for name, value in vars(self).items():
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be non-negative, got {value!r}")

    def check_smoothing(self):
        if self.alpha_fwd > 1 or self.alpha_rec > 1:
            raise ValueError("alpha_fwd and alpha_rec are smoothing weights and must be <= 1")

    @classmethod
    def proposed(cls):
        return cls()

    @classmethod
    def standard(cls):
        return cls(alpha_x=0.1, alpha_d=0.3, alpha_omega=0.0, alpha_fwd=0.0, alpha_rec=0.0, kappa=0.0)

    def for_variant(self, variant: ObserverVariant) -> "ObserverGains":
        if ObserverVariant(variant) is ObserverVariant.STANDARD:
            return replace(self, alpha_omega=0.0, alpha_fwd=0.0, alpha_rec=0.0)
        return self


@dataclass
class EstimatorState:
    x_hat: np.ndarray = field(default_factory=lambda: np.zeros(2))
    d_hat: np.ndarray = field(default_factory=lambda: np.zeros(2))
    phi_fwd_hat: float = 0.0
    phi_rec_hat: float = 0.0
    delta_omega_hat: float = 0.0
    u_fwd_prev: np.ndarray = field(default_factory=lambda: np.zeros(2))
    u_prev: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def copy(self) -> "EstimatorState":
        return EstimatorState(self.x_hat.copy(), self.d_hat.copy(), self.phi_fwd_hat,
                              self.phi_rec_hat, self.delta_omega_hat,
                              self.u_fwd_prev.copy(), self.u_prev.copy())


@dataclass
class Measurements:
    pickup: np.ndarray
    forward: np.ndarray
    reflected: np.ndarray


@dataclass
class StepDiagnostics:
    x_pred: np.ndarray
    innovation: np.ndarray
    skip: int = 0

    @property
    def innovation_norm(self) -> float:
        return float(np.hypot(*self.innovation))


def model_matrices(est: EstimatorState, params: CavityParams, small_angle: bool = False):
    """``(A_hat, B_hat)`` built from the current detuning and forward-drift estimates."""
    a_hat = I2 + params.ts * (est.delta_omega_hat * J - params.omega_half * I2)
    b_hat = params.ts * params.omega_half * rotation(est.phi_fwd_hat, small_angle)
    return a_hat, b_hat


def eso_predict(est: EstimatorState, u_prev, params: CavityParams, small_angle: bool = False) -> np.ndarray:
    a_hat, b_hat = model_matrices(est, params, small_angle)
    return a_hat @ est.x_hat + b_hat @ np.asarray(u_prev, dtype=float) + est.d_hat


def eso_innovation(y_aligned, x_pred) -> np.ndarray:
    return np.asarray(y_aligned, dtype=float) - np.asarray(x_pred, dtype=float)


def eso_update(est: EstimatorState, x_pred, r, gains: ObserverGains):
    """Return the corrected ``(x_hat, d_hat)``."""
    r = np.asarray(r, dtype=float)
    return np.asarray(x_pred, dtype=float) + gains.alpha_x * r, est.d_hat + gains.alpha_d * r


def _drift_filter(estimate: float, raw: float, gain: float, literal: bool) -> float:
    if literal:
        return estimate + gain * raw
    return estimate + gain * wrap_angle(raw - estimate)


def _usable(*zs, eps=EPS_U) -> bool:
    return all(math.hypot(z[0], z[1]) > eps for z in zs)


def fwd_drift_update(est: EstimatorState, u_fwd_meas, u_cmd, gains: ObserverGains,
                     literal: bool = False, eps_u: float = EPS_U):
    """Return ``(phi_fwd_hat, skipped)`` from the forward-monitor vs command orientation."""
    if not _usable(u_fwd_meas, u_cmd, eps=eps_u):
        return est.phi_fwd_hat, True
    raw = wrap_angle(angle(u_fwd_meas) - angle(u_cmd))
    return _drift_filter(est.phi_fwd_hat, raw, gains.alpha_fwd, literal), False


def predict_reflected(u_fwd_prev, delta_omega_hat: float, gains: ObserverGains,
                      params: CavityParams) -> np.ndarray:
    """Reflected wave expected if the cavity sat at steady state for ``u_fwd_prev``."""
    u = np.asarray(u_fwd_prev, dtype=float)
    eps = delta_omega_hat / params.omega_half
    # (I - eps*J)^-1 = (I + eps*J) / (1 + eps^2)
    x_ss = (u + eps * (J @ u)) / (1.0 + eps * eps)
    return u - gains.kappa * x_ss


def detuning_step_gain(u_fwd, gains: ObserverGains, params: CavityParams) -> float:
    """Bandwidth-limited Gauss-Newton normalization of the reflected correlation.

    Near resonance ``d r_refl / d(delta_omega_hat) = (kappa/omega_half) J u``,
    so ``omega_half / (kappa |u|^2)`` would be a full linearized step.  The
    field only moves ``ts * omega_half`` of the way to a new steady state per
    sample, and a full step outruns it (the loop goes unstable), so the step
    is scaled by that same fraction.  ``alpha_omega = 1`` then gives a
    low-bandwidth integrator with a time constant of a few cavity samples.
    """
    return params.ts * params.omega_half ** 2 / (gains.kappa * float(u_fwd @ u_fwd))


def detuning_update(est: EstimatorState, u_refl_meas, u_fwd, gains: ObserverGains,
                    params: CavityParams, sign: float = DESCENT_SIGN, eps_u: float = EPS_U):
    """Return ``(delta_omega_hat, skipped)`` after one normalized gradient step.

    ``u_fwd`` is the forward measurement paired with the drive that produced
    ``u_refl_meas`` (the previous sample's forward wave).
    """
    u = np.asarray(u_fwd, dtype=float)
    if gains.kappa == 0.0 or not _usable(u, eps=eps_u):
        return est.delta_omega_hat, True
    r = np.asarray(u_refl_meas, dtype=float) - predict_reflected(u, est.delta_omega_hat, gains, params)
    corr = float(r @ (J @ u))
    step = sign * gains.alpha_omega * detuning_step_gain(u, gains, params) * corr
    return est.delta_omega_hat + step, False


def rec_drift_update(est: EstimatorState, y_raw, x_pred, gains: ObserverGains,
                     literal: bool = False, eps_u: float = EPS_U):
    """Return ``(phi_rec_hat, skipped)`` from pickup vs predicted-field orientation."""
    if not _usable(y_raw, x_pred, eps=eps_u):
        return est.phi_rec_hat, True
    raw = wrap_angle(angle(y_raw) - angle(x_pred))
    return _drift_filter(est.phi_rec_hat, raw, gains.alpha_rec, literal), False


def observer_step(est: EstimatorState, meas: Measurements, u_prev, gains: ObserverGains,
                  variant: ObserverVariant, params: CavityParams, *, literal_drift: bool = False,
                  small_angle: bool = False, descent_sign: float = DESCENT_SIGN,
                  eps_u: float = EPS_U):
    """Process one sample of measurements; returns ``(new_state, diagnostics)``.

    The drift observers run first so that the prediction over ``[k-1, k)``
    uses the forward-drift and detuning estimates informed by the monitors
    of that same interval.  The receiver drift is then read off the raw
    pickup against that prediction, and the ESO corrects with the pickup
    de-rotated by the new receiver estimate.  The standard variant runs
    only the ESO, on the raw pickup.
    """
    u_prev = np.asarray(u_prev, dtype=float)
    new = est.copy()
    skip = 0
    y = np.asarray(meas.pickup, dtype=float)
    proposed = ObserverVariant(variant) is ObserverVariant.PROPOSED

    if proposed:
        new.phi_fwd_hat, skipped = fwd_drift_update(new, meas.forward, u_prev, gains, literal_drift, eps_u)
        skip |= SKIP_FWD * skipped
        new.delta_omega_hat, skipped = detuning_update(new, meas.reflected, meas.forward, gains,
                                                       params, descent_sign, eps_u)
        skip |= SKIP_DETUNING * skipped

    x_pred = eso_predict(new, u_prev, params, small_angle)

    if proposed:
        new.phi_rec_hat, skipped = rec_drift_update(new, y, x_pred, gains, literal_drift, eps_u)
        skip |= SKIP_REC * skipped
        y = rot_exact(-new.phi_rec_hat) @ y

    r = eso_innovation(y, x_pred)
    new.x_hat, new.d_hat = eso_update(new, x_pred, r, gains)
    new.u_fwd_prev = np.asarray(meas.forward, dtype=float).copy()
    new.u_prev = u_prev.copy()
    return new, StepDiagnostics(x_pred=x_pred, innovation=r, skip=skip)


def eso_error_map(gains: ObserverGains, a_hat) -> np.ndarray:
    """4x4 map of the joint (state, disturbance) estimation error for frozen model matrices.

    With ``e = x - x_hat`` and ``eta = d - d_hat``: the predicted error is
    ``A e + eta``; the ESO keeps ``(1 - alpha_x)`` of it in ``e`` and removes
    ``alpha_d`` of it from ``eta``.
    """
    a_hat = np.asarray(a_hat, dtype=float)
    return np.block([
        [(1 - gains.alpha_x) * a_hat, (1 - gains.alpha_x) * I2],
        [-gains.alpha_d * a_hat, (1 - gains.alpha_d) * I2],
    ])


def descent_sign_check(sign: float, n_points: int = 20, seed: int = 0,
                       params: CavityParams | None = None, gains: ObserverGains | None = None):
    """Compare the signed detuning update against a finite-difference gradient.

    At each random operating point the reflected measurement is synthesized
    noise-free for a true detuning, and the update direction at a wrong
    estimate must oppose ``d ||r_refl||^2 / d(delta_omega_hat)``.
    Returns a boolean array, one entry per point.
    """
    params = params or CavityParams()
    gains = gains or ObserverGains.proposed()
    rng = np.random.default_rng(seed)
    wh = params.omega_half
    ok = np.zeros(n_points, dtype=bool)
    for i in range(n_points):
        mag = rng.uniform(0.2, 2.0)
        theta = rng.uniform(-math.pi, math.pi)
        u = mag * np.array([math.cos(theta), math.sin(theta)])
        true_dw = rng.uniform(-0.1, 0.1) * wh
        est_dw = true_dw + rng.choice([-1.0, 1.0]) * rng.uniform(1e-3, 5e-2) * wh
        refl = predict_reflected(u, true_dw, gains, params)

        def cost(dw):
            r = refl - predict_reflected(u, dw, gains, params)
            return float(r @ r)

        h = 1e-6 * wh
        grad = (cost(est_dw + h) - cost(est_dw - h)) / (2 * h)
        new_dw, _ = detuning_update(EstimatorState(delta_omega_hat=est_dw), refl, u, gains, params, sign)
        ok[i] = np.sign(new_dw - est_dw) == -np.sign(grad) != 0
    return ok


def calibrate_descent_sign(n_points: int = 20, seed: int = 0) -> float:
    """Pick the update sign that descends at every sampled operating point."""
    for sign in (1.0, -1.0):
        if descent_sign_check(sign, n_points, seed).all():
            return sign
    raise RuntimeError("neither update sign is a descent direction at all sampled points")
