"""Ground-truth discrete cavity plant and its measurement channels."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .phasor import I2, J, rot_exact, rotation


@dataclass(frozen=True)
class CavityParams:
    """Physical and loop constants of the cavity.

    ``omega_half`` is derived from ``omega0 / (2 q_loaded)`` and cannot be
    passed in.  ``kappa`` is the true coupling of the stored field into the
    reflected-wave channel (normalized voltages).
    """

    omega0: float = 2.0 * math.pi * 805e6
    q_loaded: float = 1.61e4
    ts: float = 1e-6
    kappa: float = 200.0
    omega_half: float = field(init=False)

    def __post_init__(self):
        for name in ("omega0", "q_loaded", "ts"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if not (math.isfinite(self.kappa) and self.kappa >= 0):
            raise ValueError(f"kappa must be non-negative, got {self.kappa!r}")
        object.__setattr__(self, "omega_half", self.omega0 / (2.0 * self.q_loaded))
        if not self.ts * self.omega_half < 2.0:
            raise ValueError(
                f"ts*omega_half = {self.ts * self.omega_half:.4g} >= 2; forward Euler is unstable"
            )

    @property
    def decay(self) -> float:
        """Per-step Euler decay ``1 - ts*omega_half``."""
        return 1.0 - self.ts * self.omega_half


@dataclass
class TruthState:
    x: np.ndarray
    phi_fwd: float = 0.0
    phi_rec: float = 0.0
    delta_omega: float = 0.0
    d: np.ndarray = field(default_factory=lambda: np.zeros(2))


@dataclass(frozen=True)
class ChannelNoise:
    """Per-component Gaussian standard deviations of each measured channel."""

    sigma_pickup: float = 1e-4
    sigma_reflected: float = 1e-4
    sigma_reference: float = 1e-4
    sigma_forward: float = 1e-4

    def __post_init__(self):
        for name, value in vars(self).items():
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be non-negative, got {value!r}")


def system_matrix(params: CavityParams, delta_omega: float) -> np.ndarray:
    """Euler state map ``I + ts*(delta_omega*J - omega_half*I)``."""
    return I2 + params.ts * (delta_omega * J - params.omega_half * I2)


def input_matrix(params: CavityParams, phi_fwd: float, small_angle: bool = False) -> np.ndarray:
    return params.ts * params.omega_half * rotation(phi_fwd, small_angle)


def build_discrete_matrices(params: CavityParams, delta_omega: float, phi_fwd: float,
                            small_angle: bool = False):
    return system_matrix(params, delta_omega), input_matrix(params, phi_fwd, small_angle)


def step_truth(state: TruthState, u_cmd, params: CavityParams, small_angle: bool = False) -> np.ndarray:
    """Advance the true cavity field by one sample.

    The disturbance ``state.d`` is a continuous-time rate (volts/s), so it
    enters the discrete update as ``ts * d``.
    """
    a, b = build_discrete_matrices(params, state.delta_omega, state.phi_fwd, small_angle)
    return a @ state.x + b @ np.asarray(u_cmd, dtype=float) + params.ts * np.asarray(state.d, dtype=float)


def _noise(rng, sigma):
    if rng is None or sigma == 0.0:
        return np.zeros(2)
    return rng.normal(0.0, sigma, size=2)


def measure_pickup(x, phi_rec: float, rng=None, sigma: float = 0.0) -> np.ndarray:
    return rot_exact(phi_rec) @ np.asarray(x, dtype=float) + _noise(rng, sigma)


def measure_forward(u_cmd, phi_fwd: float, rng=None, sigma: float = 0.0) -> np.ndarray:
    return rot_exact(phi_fwd) @ np.asarray(u_cmd, dtype=float) + _noise(rng, sigma)


def measure_reflected(u_fwd, x, kappa: float, rng=None, sigma: float = 0.0) -> np.ndarray:
    """Linear port model: the forward wave minus the field leaking out of the coupler."""
    return np.asarray(u_fwd, dtype=float) - kappa * np.asarray(x, dtype=float) + _noise(rng, sigma)


def exact_propagator(params: CavityParams, delta_omega: float, dt: float) -> np.ndarray:
    """``expm(dt*(delta_omega*J - omega_half*I))`` in closed form."""
    return math.exp(-params.omega_half * dt) * rot_exact(delta_omega * dt)
