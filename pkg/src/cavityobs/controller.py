"""Feedforward model inversion plus one-step LQR feedback."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .observers import EstimatorState, model_matrices
from .phasor import I2, mat2_inverse
from .plant import CavityParams


def _is_psd(m) -> bool:
    return bool(np.allclose(m, m.T) and np.linalg.eigvalsh(m).min() >= -1e-12)


def _is_pd(m) -> bool:
    return bool(np.allclose(m, m.T) and np.linalg.eigvalsh(m).min() > 0)


@dataclass(frozen=True)
class ControlWeights:
    q_weight: np.ndarray = field(default_factory=lambda: 0.1 * I2)
    r_weight: np.ndarray = field(default_factory=lambda: 100.0 * I2)

    def __post_init__(self):
        q = np.asarray(self.q_weight, dtype=float)
        r = np.asarray(self.r_weight, dtype=float)
        object.__setattr__(self, "q_weight", q)
        object.__setattr__(self, "r_weight", r)
        if q.shape != (2, 2) or r.shape != (2, 2):
            raise ValueError("weights must be 2x2")
        if not (_is_psd(q) and _is_psd(r)):
            raise ValueError("weights must be symmetric positive semidefinite")
        if not (_is_pd(q) or _is_pd(r)):
            raise ValueError("at least one weight must be positive definite")


@dataclass(frozen=True)
class DriveCommand:
    u_ff: np.ndarray
    u_fb: np.ndarray

    @property
    def u_total(self) -> np.ndarray:
        return self.u_ff + self.u_fb


def feedforward(x_star_next, x_hat, d_hat, a_hat, b_hat) -> np.ndarray:
    """Drive that maps the estimate onto the next reference sample through the model.

    Raises:
        SingularMatrixError: if ``b_hat`` cannot be inverted.
    """
    target = np.asarray(x_star_next, dtype=float) - a_hat @ np.asarray(x_hat, dtype=float) - d_hat
    return mat2_inverse(b_hat) @ target


def lqr_gain(a_hat, b_hat, weights: ControlWeights) -> np.ndarray:
    """Gain minimizing ``e'Qe + u'Ru`` over one step of ``e <- A e + B u``."""
    q, r = weights.q_weight, weights.r_weight
    return mat2_inverse(b_hat.T @ q @ b_hat + r) @ b_hat.T @ q @ a_hat


def feedback(k_gain, x_star, x_hat) -> np.ndarray:
    return k_gain @ (np.asarray(x_star, dtype=float) - np.asarray(x_hat, dtype=float))


def one_step_cost(u, error, a_hat, b_hat, weights: ControlWeights) -> float:
    """Quadratic index for error ``error = x_hat - x*`` and drive ``u``."""
    e_next = a_hat @ error + b_hat @ u
    return float(e_next @ weights.q_weight @ e_next + u @ weights.r_weight @ u)


def control_step(est: EstimatorState, x_star, x_star_next, weights: ControlWeights,
                 params: CavityParams, small_angle: bool = False) -> DriveCommand:
    """Compose the command held over ``[k, k+1)`` from the current estimates."""
    a_hat, b_hat = model_matrices(est, params, small_angle)
    u_ff = feedforward(x_star_next, est.x_hat, est.d_hat, a_hat, b_hat)
    u_fb = feedback(lqr_gain(a_hat, b_hat, weights), x_star, est.x_hat)
    return DriveCommand(u_ff=u_ff, u_fb=u_fb)
