"""Single trials and paired Monte Carlo ensembles.

Each trial draws its truth trajectories and noise once from a trial seed and
runs every requested observer variant against that same realization.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .controller import ControlWeights
from .disturbances import (DEFAULT_DISTURBANCE, TRUTH_STREAMS, DetuningProfileConfig,
                           PhaseDriftProfileConfig, gen_additive_disturbance, gen_detuning,
                           gen_phase_drift, substream, trial_seed)
from .kernel import COL, run_closed_loop
from .observers import DESCENT_SIGN, EPS_U, ObserverGains, ObserverVariant
from .plant import CavityParams, ChannelNoise

CHANNELS = ("fwd", "rec", "detuning")
METRICS = ("amplitude", "phase") + CHANNELS
WINDOWS = ("flattop", "full")


@dataclass(frozen=True)
class MacropulseConfig:
    """Reference envelope timing (seconds) and flattop setpoint.

    ``tail`` selects the reference between ``flattop_end`` and ``horizon``:
    ``"hold"`` keeps the flattop value, ``"zero"`` switches it off.
    """

    fill_duration: float = 325e-6
    flattop_end: float = 950e-6
    horizon: float = 1e-3
    flattop_amplitude: float = 1.0
    flattop_phase: float = 0.0
    tail: str = "hold"

    def __post_init__(self):
        if not (0 < self.fill_duration < self.flattop_end <= self.horizon):
            raise ValueError("need 0 < fill_duration < flattop_end <= horizon")
        if self.tail not in ("hold", "zero"):
            raise ValueError(f"tail must be 'hold' or 'zero', got {self.tail!r}")

    def n_steps(self, ts: float) -> int:
        n = round(self.horizon / ts)
        if n < 1 or abs(n * ts - self.horizon) > 1e-9 * self.horizon:
            raise ValueError(f"horizon {self.horizon!r} is not an integer number of samples of {ts!r}")
        return n


def reference_amplitude(cfg: MacropulseConfig, t):
    t = np.asarray(t, dtype=float)
    fill = cfg.flattop_amplitude * (1.0 - np.exp(-5.0 * t / cfg.fill_duration))
    # the fill curve includes its endpoint; the next sample is on the flattop
    tol = 1e-9 * cfg.horizon
    amp = np.where(t <= cfg.fill_duration + tol, fill, cfg.flattop_amplitude)
    if cfg.tail == "zero":
        amp = np.where(t > cfg.flattop_end, 0.0, amp)
    return np.where(t < 0, 0.0, amp)


def reference_array(cfg: MacropulseConfig, ts: float, n_steps: int | None = None) -> np.ndarray:
    """``(n_steps + 1, 2)`` reference phasors at ``t = k*ts``."""
    n = cfg.n_steps(ts) if n_steps is None else n_steps
    amp = reference_amplitude(cfg, np.arange(n + 1) * ts)
    return np.column_stack([amp * math.cos(cfg.flattop_phase), amp * math.sin(cfg.flattop_phase)])


def reference_trajectory(cfg: MacropulseConfig, k: int, ts: float):
    """Reference at samples ``k`` and ``k + 1``."""
    ref = reference_array(cfg, ts, k + 1)
    return ref[k], ref[k + 1]


@dataclass(frozen=True)
class ModelOptions:
    literal_drift: bool = False
    small_angle: bool = False
    eps_u: float = EPS_U
    descent_sign: float = DESCENT_SIGN


@dataclass(frozen=True)
class Scenario:
    """Everything one trial needs besides its seed."""

    cavity: CavityParams = field(default_factory=CavityParams)
    weights: ControlWeights = field(default_factory=ControlWeights)
    proposed_gains: ObserverGains = field(default_factory=ObserverGains.proposed)
    standard_gains: ObserverGains = field(default_factory=ObserverGains.standard)
    macropulse: MacropulseConfig = field(default_factory=MacropulseConfig)
    detuning: DetuningProfileConfig = field(default_factory=DetuningProfileConfig)
    phase_fwd: PhaseDriftProfileConfig = field(default_factory=PhaseDriftProfileConfig)
    phase_rec: PhaseDriftProfileConfig = field(default_factory=PhaseDriftProfileConfig)
    disturbance: object = DEFAULT_DISTURBANCE
    noise: ChannelNoise = field(default_factory=ChannelNoise)
    options: ModelOptions = field(default_factory=ModelOptions)

    @property
    def n_steps(self) -> int:
        return self.macropulse.n_steps(self.cavity.ts)

    def gains(self, variant) -> ObserverGains:
        if ObserverVariant(variant) is ObserverVariant.PROPOSED:
            return self.proposed_gains
        return self.standard_gains.for_variant(ObserverVariant.STANDARD)

    @classmethod
    def quiet(cls, **overrides) -> "Scenario":
        """No drifts, no disturbance, no noise; override fields by keyword."""
        base = cls(
            detuning=DetuningProfileConfig.zero(),
            phase_fwd=PhaseDriftProfileConfig.zero(),
            phase_rec=PhaseDriftProfileConfig.zero(),
            disturbance=PhaseDriftProfileConfig.zero(),
            noise=ChannelNoise(0.0, 0.0, 0.0, 0.0),
        )
        return replace(base, **overrides)


@dataclass
class TruthRealization:
    ref: np.ndarray
    delta_omega: np.ndarray
    phi_fwd: np.ndarray
    phi_rec: np.ndarray
    disturbance: np.ndarray
    noise_pickup: np.ndarray
    noise_forward: np.ndarray
    noise_reflected: np.ndarray
    noise_reference: np.ndarray


def realize_truth(scenario: Scenario, seed) -> TruthRealization:
    ts, n = scenario.cavity.ts, scenario.n_steps
    noise = scenario.noise

    def gauss(key, sigma):
        if sigma == 0.0:
            return np.zeros((n, 2))
        return np.random.default_rng(substream(seed, TRUTH_STREAMS[key])).normal(0.0, sigma, (n, 2))

    return TruthRealization(
        ref=reference_array(scenario.macropulse, ts, n),
        delta_omega=gen_detuning(substream(seed, TRUTH_STREAMS["detuning"]), scenario.detuning, n, ts),
        phi_fwd=gen_phase_drift(substream(seed, TRUTH_STREAMS["phase_fwd"]), scenario.phase_fwd, n, ts),
        phi_rec=gen_phase_drift(substream(seed, TRUTH_STREAMS["phase_rec"]), scenario.phase_rec, n, ts),
        disturbance=gen_additive_disturbance(substream(seed, TRUTH_STREAMS["disturbance"]),
                                             scenario.disturbance, n, ts),
        noise_pickup=gauss("noise_pickup", noise.sigma_pickup),
        noise_forward=gauss("noise_forward", noise.sigma_forward),
        noise_reflected=gauss("noise_reflected", noise.sigma_reflected),
        noise_reference=gauss("noise_reference", noise.sigma_reference),
    )


@dataclass
class TrialRecord:
    """Per-step log of one trial; every array has one row per sample."""

    variant: ObserverVariant
    t: np.ndarray
    x_star: np.ndarray
    truth: TruthRealization
    table: np.ndarray
    abort_step: int = -1
    eps_u: float = EPS_U

    def __getitem__(self, name: str) -> np.ndarray:
        return self.table[:, COL[name]]

    def phasor(self, name: str) -> np.ndarray:
        return self.table[:, [COL[name + "_i"], COL[name + "_q"]]]

    @property
    def n_steps(self) -> int:
        return len(self.t)

    @property
    def aborted(self) -> bool:
        return self.abort_step >= 0

    @property
    def x(self) -> np.ndarray:
        return self.phasor("x")

    def tracking_error(self) -> np.ndarray:
        return np.hypot(*(self.x - self.x_star).T)

    def channel_errors(self) -> dict:
        """Estimate minus the truth of the interval each estimate observes.

        The forward-drift and detuning estimates at sample ``k`` come from
        monitors of the drive applied over ``[k-1, k)``, so they are compared
        with the truth at ``k-1``; the receiver drift is read at ``k``.
        """
        lagged = lambda a: np.concatenate([a[:1], a[:-1]])
        wrap = lambda a: np.angle(np.exp(1j * a))
        tr = self.truth
        return {
            "fwd": wrap(self["phi_fwd_hat"] - lagged(tr.phi_fwd)),
            "rec": wrap(self["phi_rec_hat"] - tr.phi_rec),
            "detuning": self["dw_hat"] - lagged(tr.delta_omega),
        }


def run_trial(seed, scenario: Scenario, variant=ObserverVariant.PROPOSED, *, backend=None,
              truth: TruthRealization | None = None) -> TrialRecord:
    """Simulate one closed-loop realization for one observer variant."""
    variant = ObserverVariant(variant)
    truth = truth if truth is not None else realize_truth(scenario, seed)
    gains = scenario.gains(variant)
    if not scenario.options.literal_drift:
        gains.check_smoothing()
    w = scenario.weights
    opts = scenario.options
    table, abort = run_closed_loop(
        ts=scenario.cavity.ts, omega_half=scenario.cavity.omega_half, kappa_true=scenario.cavity.kappa,
        gains=(gains.alpha_x, gains.alpha_d, gains.alpha_omega, gains.alpha_fwd, gains.alpha_rec, gains.kappa),
        weights=tuple(w.q_weight.ravel()) + tuple(w.r_weight.ravel()),
        proposed=variant is ObserverVariant.PROPOSED, literal=opts.literal_drift,
        small_angle=opts.small_angle, descent_sign=opts.descent_sign, eps_u=opts.eps_u,
        ref=truth.ref, delta_omega=truth.delta_omega, phi_fwd=truth.phi_fwd, phi_rec=truth.phi_rec,
        disturbance=truth.disturbance, noise_pickup=truth.noise_pickup,
        noise_forward=truth.noise_forward, noise_reflected=truth.noise_reflected,
        noise_reference=truth.noise_reference, backend=backend,
    )
    n = len(truth.delta_omega)
    return TrialRecord(variant=variant, t=np.arange(n) * scenario.cavity.ts, x_star=truth.ref[:n],
                       truth=truth, table=table, abort_step=abort, eps_u=opts.eps_u)


def amplitude_phase_errors(record: TrialRecord):
    """Amplitude and phase error series; phase is NaN where it is undefined."""
    x, xs = record.x, record.x_star
    amp = np.hypot(*x.T)
    amp_star = np.hypot(*xs.T)
    e_a = amp - amp_star
    phase_star = np.arctan2(xs[:, 1], xs[:, 0])
    e_phi = np.angle(np.exp(1j * (np.arctan2(x[:, 1], x[:, 0]) - phase_star)))
    e_phi = np.where((amp_star > 0) & (amp >= record.eps_u), e_phi, np.nan)
    return e_a, e_phi


def window_mask(cfg: MacropulseConfig, t, window: str) -> np.ndarray:
    # tolerance keeps sample k*ts on the boundary it nominally sits on
    tol = 1e-9 * cfg.horizon
    end = t <= cfg.flattop_end + tol
    if window == "full":
        return end
    if window == "flattop":
        return end & (t >= cfg.fill_duration - tol)
    raise ValueError(f"unknown window {window!r}; expected one of {WINDOWS}")


def error_series(record: TrialRecord) -> dict:
    e_a, e_phi = amplitude_phase_errors(record)
    series = {"amplitude": np.abs(e_a), "phase": np.abs(e_phi)}
    series.update({ch: np.abs(err) for ch, err in record.channel_errors().items()})
    return series


def false_localization_scores(record: TrialRecord, cfg: MacropulseConfig, window: str = "flattop") -> dict:
    """Time-averaged absolute estimation error per drift channel."""
    mask = window_mask(cfg, record.t, window)
    return {ch: float(np.mean(np.abs(err[mask]))) for ch, err in record.channel_errors().items()}


def trial_scores(record: TrialRecord, cfg: MacropulseConfig, window: str) -> dict:
    """Time-averaged absolute errors for every metric over ``window``."""
    mask = window_mask(cfg, record.t, window)
    return {name: float(np.nanmean(s[mask])) for name, s in error_series(record).items()}


def sample_exceedance(record: TrialRecord, cfg: MacropulseConfig, window: str, thresholds: dict) -> dict:
    """Per metric, the fraction of window samples above each threshold."""
    mask = window_mask(cfg, record.t, window)
    out = {}
    for name, s in error_series(record).items():
        s = s[mask]
        s = s[~np.isnan(s)]
        out[name] = (s[:, None] > thresholds[name][None, :]).mean(axis=0)
    return out


def exceedance_likelihood(per_trial_scores, thresholds) -> np.ndarray:
    """Fraction of trials whose score exceeds each threshold."""
    scores = np.asarray(per_trial_scores, dtype=float).ravel()
    if scores.size == 0:
        raise ValueError("exceedance likelihood of an empty trial set is undefined")
    thr = np.asarray(thresholds, dtype=float)
    return (scores[:, None] > thr[None, :]).mean(axis=0)


def default_thresholds(n: int = 41) -> dict:
    phase = np.logspace(-5, -1, n)
    return {
        "amplitude": np.logspace(-5, -1, n),
        "phase": phase,
        "fwd": phase.copy(),
        "rec": phase.copy(),
        "detuning": 2 * math.pi * np.logspace(-1, 4, n),
    }


@dataclass
class EnsembleResult:
    """Per-variant ensemble statistics.

    ``scores[window][metric]`` holds one time-averaged score per completed
    trial (trial-index order); ``curves[window][metric]`` is the likelihood
    at each of ``thresholds[metric]``.
    """

    variant: ObserverVariant
    n_trials: int
    base_seed: int
    thresholds: dict
    scores: dict
    curves: dict
    aborted: list = field(default_factory=list)
    metric_mode: str = "average"

    @property
    def abort_count(self) -> int:
        return len(self.aborted)


def _trial_task(args):
    index, base_seed, scenario, variants, thresholds, metric_mode, backend = args
    truth = realize_truth(scenario, trial_seed(base_seed, index))
    out = {}
    for variant in variants:
        rec = run_trial(None, scenario, variant, backend=backend, truth=truth)
        if rec.aborted:
            out[variant] = None
            continue
        per_window = {}
        for window in WINDOWS:
            if metric_mode == "sample":
                per_window[window] = sample_exceedance(rec, scenario.macropulse, window, thresholds)
            else:
                per_window[window] = trial_scores(rec, scenario.macropulse, window)
        out[variant] = per_window
    return out


def run_monte_carlo(n_trials: int, base_seed: int, scenario: Scenario, variants=tuple(ObserverVariant),
                    *, thresholds: dict | None = None, metric_mode: str = "average",
                    workers: int = 1, backend=None) -> dict:
    """Run paired trials and aggregate exceedance curves for each variant.

    Trial ``i`` uses seed node ``(base_seed, i)`` regardless of scheduling;
    results are reduced in trial-index order so the worker count never
    changes the output.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if metric_mode not in ("average", "sample"):
        raise ValueError(f"metric_mode must be 'average' or 'sample', got {metric_mode!r}")
    variants = tuple(ObserverVariant(v) for v in variants)
    thresholds = thresholds or default_thresholds()
    tasks = [(i, base_seed, scenario, variants, thresholds, metric_mode, backend) for i in range(n_trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial_task, tasks, chunksize=max(1, n_trials // (4 * workers))))
    else:
        results = [_trial_task(t) for t in tasks]

    ensembles = {}
    for variant in variants:
        aborted = [i for i, r in enumerate(results) if r[variant] is None]
        done = [r[variant] for r in results if r[variant] is not None]
        scores, curves = {}, {}
        for window in WINDOWS:
            scores[window] = {m: np.array([d[window][m] for d in done]) for m in METRICS}
            if metric_mode == "sample":
                curves[window] = {m: np.mean(scores[window][m], axis=0) if done else
                                  np.full(len(thresholds[m]), np.nan) for m in METRICS}
            else:
                curves[window] = {m: exceedance_likelihood(scores[window][m], thresholds[m]) if done else
                                  np.full(len(thresholds[m]), np.nan) for m in METRICS}
        ensembles[variant] = EnsembleResult(variant=variant, n_trials=n_trials, base_seed=base_seed,
                                            thresholds=thresholds, scores=scores, curves=curves,
                                            aborted=aborted, metric_mode=metric_mode)
    return ensembles
