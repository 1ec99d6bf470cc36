"""Seeded truth trajectories for detuning, phase drifts and the additive disturbance.

Randomness is organized as a tree of :class:`numpy.random.SeedSequence`
nodes.  A node's children are addressed by fixed integer keys appended to
its ``spawn_key`` (see :func:`substream`), so enabling or reconfiguring one
component never changes the draws of another.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

# Fixed child keys below a trial node.
TRUTH_STREAMS = {
    "detuning": 0,
    "phase_fwd": 1,
    "phase_rec": 2,
    "disturbance": 3,
    "noise_pickup": 10,
    "noise_forward": 11,
    "noise_reflected": 12,
    "noise_reference": 13,
}

_DETUNING_PARTS = {"bias": 0, "sinusoids": 1, "wander": 2, "thermal": 3}
_DRIFT_PARTS = {"init": 0, "walk": 1, "periodic": 2}


def as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def substream(seed, *keys: int) -> np.random.SeedSequence:
    """Child of ``seed`` addressed by ``keys``; deterministic and order-free."""
    parent = as_seed_sequence(seed)
    return np.random.SeedSequence(parent.entropy, spawn_key=tuple(parent.spawn_key) + tuple(keys))


def trial_seed(base_seed: int, trial: int) -> np.random.SeedSequence:
    return substream(base_seed, trial)


def _rng(seed, *keys) -> np.random.Generator:
    return np.random.default_rng(substream(seed, *keys))


def _check_range(name, pair):
    lo, hi = pair
    if not (0 <= lo <= hi):
        raise ValueError(f"{name} must satisfy 0 <= lo <= hi, got {pair!r}")


@dataclass(frozen=True)
class DetuningProfileConfig:
    """Composite detuning process, all in rad/s except frequencies (Hz) and tau (s)."""

    bias_range: float = 2 * math.pi * 200
    n_sinusoids: tuple = (2, 4)
    sinusoid_amp_range: tuple = (0.0, 2 * math.pi * 100)
    sinusoid_freq_range: tuple = (60.0, 2000.0)
    wander_std: float = 2 * math.pi * 0.5
    thermal_amp: float = 2 * math.pi * 50
    thermal_tau: float = 0.2
    bias_offset: float = 0.0

    def __post_init__(self):
        if self.bias_range < 0 or self.wander_std < 0 or self.thermal_amp < 0:
            raise ValueError("detuning magnitudes must be non-negative")
        if self.thermal_tau <= 0:
            raise ValueError("thermal_tau must be positive")
        lo, hi = self.n_sinusoids
        if not (0 <= lo <= hi) or int(lo) != lo or int(hi) != hi:
            raise ValueError(f"n_sinusoids must be an integer range, got {self.n_sinusoids!r}")
        _check_range("sinusoid_amp_range", self.sinusoid_amp_range)
        _check_range("sinusoid_freq_range", self.sinusoid_freq_range)

    def check_sampling(self, ts: float):
        hi = self.sinusoid_freq_range[1]
        if self.n_sinusoids[1] > 0 and not (self.sinusoid_freq_range[0] > 0 and hi < 0.5 / ts):
            raise ValueError(f"sinusoid frequencies must lie in (0, {0.5 / ts:g}) Hz")

    @classmethod
    def zero(cls, bias_offset: float = 0.0):
        return cls(bias_range=0.0, n_sinusoids=(0, 0), sinusoid_amp_range=(0.0, 0.0),
                   wander_std=0.0, thermal_amp=0.0, bias_offset=bias_offset)


@dataclass(frozen=True)
class PhaseDriftProfileConfig:
    """Slow random walk plus one small periodic component.

    Used for the phase drifts (radians) and, with different magnitudes,
    for each component of the additive disturbance (volts/s).
    """

    init_range: float = 20e-3
    walk_std: float = 5e-6
    periodic_amp: float = 2e-3
    periodic_freq: tuple = (60.0, 300.0)
    offset: float = 0.0

    def __post_init__(self):
        if min(self.init_range, self.walk_std, self.periodic_amp) < 0:
            raise ValueError("drift magnitudes must be non-negative")
        _check_range("periodic_freq", self.periodic_freq)

    @classmethod
    def zero(cls, offset: float = 0.0):
        return cls(init_range=0.0, walk_std=0.0, periodic_amp=0.0, offset=offset)


#: Default additive-disturbance profile per IQ component (volts/s).
DEFAULT_DISTURBANCE = PhaseDriftProfileConfig(
    init_range=2 * math.pi * 10,
    walk_std=2 * math.pi * 0.05,
    periodic_amp=2 * math.pi * 2,
    periodic_freq=(60.0, 300.0),
)


def _time(n_steps, ts):
    if n_steps <= 0:
        raise ValueError("n_steps must be positive")
    return np.arange(n_steps) * ts


def _random_walk(rng, std, n_steps):
    walk = np.zeros(n_steps)
    if std > 0 and n_steps > 1:
        walk[1:] = np.cumsum(rng.normal(0.0, std, size=n_steps - 1))
    return walk


def detuning_components(seed, cfg: DetuningProfileConfig, n_steps: int, ts: float) -> dict:
    """Each additive part of the detuning trajectory, keyed by name."""
    t = _time(n_steps, ts)
    out = {}

    rng = _rng(seed, _DETUNING_PARTS["bias"])
    out["bias"] = np.full(n_steps, cfg.bias_offset + rng.uniform(-cfg.bias_range, cfg.bias_range))

    rng = _rng(seed, _DETUNING_PARTS["sinusoids"])
    lo, hi = cfg.n_sinusoids
    count = int(rng.integers(int(lo), int(hi) + 1))
    sines = np.zeros(n_steps)
    for _ in range(count):
        amp = rng.uniform(*cfg.sinusoid_amp_range)
        freq = rng.uniform(*cfg.sinusoid_freq_range)
        psi = rng.uniform(0.0, 2.0 * math.pi)
        sines += amp * np.sin(2.0 * math.pi * freq * t + psi)
    out["sinusoids"] = sines

    out["wander"] = _random_walk(_rng(seed, _DETUNING_PARTS["wander"]), cfg.wander_std, n_steps)

    # Stationary first-order lag driven by white noise, started in equilibrium.
    rng = _rng(seed, _DETUNING_PARTS["thermal"])
    if cfg.thermal_amp > 0:
        a = math.exp(-ts / cfg.thermal_tau)
        drive = rng.normal(0.0, 1.0, size=n_steps)
        drive[0] *= cfg.thermal_amp
        drive[1:] *= cfg.thermal_amp * math.sqrt(1.0 - a * a)
        out["thermal"] = lfilter([1.0], [1.0, -a], drive)
    else:
        out["thermal"] = np.zeros(n_steps)
    return out


def gen_detuning(seed, cfg: DetuningProfileConfig, n_steps: int, ts: float) -> np.ndarray:
    """Detuning trajectory in rad/s: bias + sinusoids + random wander + thermal lag."""
    cfg.check_sampling(ts)
    parts = detuning_components(seed, cfg, n_steps, ts)
    return parts["bias"] + parts["sinusoids"] + parts["wander"] + parts["thermal"]


def gen_phase_drift(seed, cfg: PhaseDriftProfileConfig, n_steps: int, ts: float) -> np.ndarray:
    """Unwrapped drift trajectory: uniform init + Gaussian walk + periodic ripple."""
    t = _time(n_steps, ts)
    init = cfg.offset + _rng(seed, _DRIFT_PARTS["init"]).uniform(-cfg.init_range, cfg.init_range)
    walk = _random_walk(_rng(seed, _DRIFT_PARTS["walk"]), cfg.walk_std, n_steps)
    rng = _rng(seed, _DRIFT_PARTS["periodic"])
    freq = rng.uniform(*cfg.periodic_freq)
    psi = rng.uniform(0.0, 2.0 * math.pi)
    return init + walk + cfg.periodic_amp * np.sin(2.0 * math.pi * freq * t + psi)


def gen_additive_disturbance(seed, cfg, n_steps: int, ts: float) -> np.ndarray:
    """``(n_steps, 2)`` continuous-rate disturbance; I and Q drawn independently.

    ``cfg`` is one :class:`PhaseDriftProfileConfig` shared by both
    components, or an ``(i_cfg, q_cfg)`` pair.
    """
    cfg_i, cfg_q = (cfg, cfg) if isinstance(cfg, PhaseDriftProfileConfig) else cfg
    return np.column_stack([
        gen_phase_drift(substream(seed, 0), cfg_i, n_steps, ts),
        gen_phase_drift(substream(seed, 1), cfg_q, n_steps, ts),
    ])
