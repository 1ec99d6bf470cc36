"""Run configuration: a line-oriented ``section.key = value`` text format.

Example::

    # longer pulse, quieter receiver
    macropulse.horizon = 2e-3
    macropulse.flattop_end = 1.9e-3
    noise.sigma_pickup = 5e-5
    detuning.bias_range = 2*pi*100
    detuning.n_sinusoids = 1, 3

Values are numbers, simple arithmetic on numbers and ``pi``, comma-separated
tuples, ``true``/``false`` or bare words.  Missing keys keep their defaults;
unknown sections or keys are errors.
"""

from __future__ import annotations

import ast
import hashlib
import math
import operator
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .controller import ControlWeights
from .disturbances import DEFAULT_DISTURBANCE, DetuningProfileConfig, PhaseDriftProfileConfig
from .harness import WINDOWS, MacropulseConfig, ModelOptions, Scenario
from .kernel import DEFAULT_BACKEND, available_backends
from .observers import ObserverGains
from .plant import CavityParams, ChannelNoise

VARIANT_CHOICES = ("proposed", "standard", "both")


class ConfigError(ValueError):
    """Raised for unreadable, malformed or invalid configuration."""

    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
        self.line = line


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_NAMES = {"pi": math.pi, "true": True, "false": False}


def _eval_node(node):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return node.value
    if isinstance(node, ast.Name):
        if node.id.lower() in _NAMES:
            return _NAMES[node.id.lower()]
        return node.id
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        left, right = _eval_node(node.left), _eval_node(node.right)
        if isinstance(left, (str, bool)) or isinstance(right, (str, bool)):
            raise ValueError("arithmetic on non-numbers")
        return _BINOPS[type(node.op)](left, right)
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        value = _eval_node(node.operand)
        if isinstance(value, (str, bool)):
            raise ValueError("arithmetic on non-numbers")
        return _UNARY[type(node.op)](value)
    if isinstance(node, ast.Tuple):
        return tuple(_eval_node(e) for e in node.elts)
    raise ValueError(f"unsupported expression {ast.dump(node)}")


def parse_value(text: str):
    """Evaluate one config value without ``eval``."""
    text = text.strip()
    if not text:
        raise ValueError("empty value")
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError:
        raise ValueError(f"cannot parse {text!r}") from None
    return _eval_node(tree.body)


def parse_config_text(text: str, path=None) -> dict:
    """``{section: {key: (value, line)}}`` from config text."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'section.key = value', got {raw.strip()!r}", path, lineno)
        lhs, rhs = line.split("=", 1)
        lhs = lhs.strip()
        if lhs.count(".") != 1 or not all(part.strip().isidentifier() for part in lhs.split(".")):
            raise ConfigError(f"bad key {lhs!r}; expected 'section.key'", path, lineno)
        section, key = (part.strip() for part in lhs.split("."))
        try:
            value = parse_value(rhs)
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise ConfigError(f"{lhs}: {exc}", path, lineno) from None
        if key in out.get(section, {}):
            raise ConfigError(f"duplicate key {lhs!r}", path, lineno)
        out.setdefault(section, {})[key] = (value, lineno)
    return out


@dataclass(frozen=True)
class MetricOptions:
    window: str = "flattop"
    mode: str = "average"
    n_thresholds: int = 41
    amplitude_range: tuple = (1e-5, 1e-1)
    phase_range: tuple = (1e-5, 1e-1)
    detuning_range_hz: tuple = (1e-1, 1e4)

    def __post_init__(self):
        if self.window not in WINDOWS:
            raise ValueError(f"window must be one of {WINDOWS}, got {self.window!r}")
        if self.mode not in ("average", "sample"):
            raise ValueError(f"mode must be 'average' or 'sample', got {self.mode!r}")
        if int(self.n_thresholds) != self.n_thresholds or self.n_thresholds < 2:
            raise ValueError("n_thresholds must be an integer >= 2")
        for name in ("amplitude_range", "phase_range", "detuning_range_hz"):
            lo, hi = getattr(self, name)
            if not (0 < lo < hi):
                raise ValueError(f"{name} must satisfy 0 < lo < hi")

    def thresholds(self) -> dict:
        """Log-spaced grids per metric; the drift phase channels share the phase grid.

        The detuning grid is given in Hz and returned in rad/s.
        """
        n = int(self.n_thresholds)
        grid = lambda r: np.logspace(math.log10(r[0]), math.log10(r[1]), n)
        phase = grid(self.phase_range)
        return {"amplitude": grid(self.amplitude_range), "phase": phase, "fwd": phase.copy(),
                "rec": phase.copy(), "detuning": 2 * math.pi * grid(self.detuning_range_hz)}


@dataclass(frozen=True)
class RunOptions:
    trials: int = 500
    seed: int = 0
    workers: int = 1
    backend: str = DEFAULT_BACKEND
    variant: str = "both"
    out_dir: str = "out"

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError("trials must be an integer >= 1")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        if int(self.workers) != self.workers or self.workers < 1:
            raise ValueError("workers must be an integer >= 1")
        if self.backend not in available_backends():
            raise ValueError(f"backend must be one of {available_backends()}, got {self.backend!r}")
        if self.variant not in VARIANT_CHOICES:
            raise ValueError(f"variant must be one of {VARIANT_CHOICES}, got {self.variant!r}")

    @property
    def variants(self) -> tuple:
        return ("proposed", "standard") if self.variant == "both" else (self.variant,)


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario = field(default_factory=Scenario)
    metrics: MetricOptions = field(default_factory=MetricOptions)
    run: RunOptions = field(default_factory=RunOptions)

    def echo(self) -> list[str]:
        """Canonical ``section.key = value`` lines of every result-affecting setting.

        Seed, worker count and output directory are left out: the seed is
        reported on its own and the other two never change results.
        """
        lines = []
        for section, (obj, names) in _echo_sections(self).items():
            for name in names:
                lines.append(f"{section}.{name} = {_fmt(getattr(obj, name))}")
        return lines

    def config_hash(self) -> str:
        return hashlib.sha256("\n".join(self.echo()).encode()).hexdigest()


def _fmt(value) -> str:
    if isinstance(value, np.ndarray):
        value = tuple(value.ravel().tolist())
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


_PROFILE_FIELDS = tuple(f.name for f in fields(PhaseDriftProfileConfig))


def _field_names(cls, skip=()):
    return tuple(f.name for f in fields(cls) if f.init and f.name not in skip)


def _echo_sections(cfg: RunConfig) -> dict:
    sc = cfg.scenario
    dist_i, dist_q = _disturbance_pair(sc.disturbance)
    return {
        "cavity": (sc.cavity, ("omega0", "q_loaded", "ts", "kappa", "omega_half")),
        "control": (_WeightsView(sc.weights), ("q", "r")),
        "proposed": (sc.proposed_gains, _field_names(ObserverGains)),
        "standard": (sc.standard_gains, ("alpha_x", "alpha_d")),
        "observer": (sc.options, _field_names(ModelOptions)),
        "macropulse": (sc.macropulse, _field_names(MacropulseConfig)),
        "detuning": (sc.detuning, _field_names(DetuningProfileConfig)),
        "phase_fwd": (sc.phase_fwd, _PROFILE_FIELDS),
        "phase_rec": (sc.phase_rec, _PROFILE_FIELDS),
        "disturbance_i": (dist_i, _PROFILE_FIELDS),
        "disturbance_q": (dist_q, _PROFILE_FIELDS),
        "noise": (sc.noise, _field_names(ChannelNoise)),
        "metrics": (cfg.metrics, _field_names(MetricOptions)),
        "mc": (cfg.run, ("trials", "backend", "variant")),
    }


@dataclass(frozen=True)
class _WeightsView:
    weights: ControlWeights

    @property
    def q(self):
        return self.weights.q_weight

    @property
    def r(self):
        return self.weights.r_weight


def _disturbance_pair(dist):
    return (dist, dist) if isinstance(dist, PhaseDriftProfileConfig) else tuple(dist)


def _weight(value):
    """Scalar -> scaled identity, 2-tuple -> diagonal, 4-tuple -> row-major 2x2."""
    if isinstance(value, (int, float)):
        return float(value) * np.eye(2)
    if isinstance(value, tuple) and len(value) == 2:
        return np.diag([float(v) for v in value])
    if isinstance(value, tuple) and len(value) == 4:
        return np.array(value, dtype=float).reshape(2, 2)
    raise ValueError("weight must be a scalar, a 2-tuple diagonal or a row-major 4-tuple")


# Accepted keys per section; the value is the constructor field they set.
_SECTIONS = {
    "cavity": {k: k for k in ("omega0", "q_loaded", "ts", "kappa")},
    "control": {"q": "q_weight", "r": "r_weight"},
    "proposed": {k: k for k in _field_names(ObserverGains)},
    "standard": {"alpha_x": "alpha_x", "alpha_d": "alpha_d"},
    "observer": {k: k for k in _field_names(ModelOptions)},
    "macropulse": {k: k for k in _field_names(MacropulseConfig)},
    "detuning": {k: k for k in _field_names(DetuningProfileConfig)},
    "phase_fwd": {k: k for k in _PROFILE_FIELDS},
    "phase_rec": {k: k for k in _PROFILE_FIELDS},
    "disturbance": {k: k for k in _PROFILE_FIELDS},
    "disturbance_i": {k: k for k in _PROFILE_FIELDS},
    "disturbance_q": {k: k for k in _PROFILE_FIELDS},
    "noise": {**{k: k for k in _field_names(ChannelNoise)}, "sigma": "sigma"},
    "metrics": {k: k for k in _field_names(MetricOptions)},
    "mc": {"trials": "trials", "seed": "seed", "workers": "workers", "backend": "backend",
           "variant": "variant"},
    "output": {"dir": "out_dir"},
}

_INT_KEYS = {"trials", "seed", "workers", "n_thresholds"}
_STR_KEYS = {"tail", "backend", "variant", "window", "mode", "out_dir"}


def _coerce(name, value):
    if name in _STR_KEYS:
        if not isinstance(value, str):
            raise ValueError(f"{name} must be a word, got {value!r}")
        return value
    if name in ("literal_drift", "small_angle"):
        if not isinstance(value, bool):
            raise ValueError(f"{name} must be true or false")
        return value
    if name in ("q_weight", "r_weight"):
        return _weight(value)
    if isinstance(value, str) or isinstance(value, bool):
        raise ValueError(f"{name} must be numeric, got {value!r}")
    if name in _INT_KEYS:
        if float(value) != int(value):
            raise ValueError(f"{name} must be an integer, got {value!r}")
        return int(value)
    if isinstance(value, tuple):
        if name == "n_sinusoids":
            return tuple(int(v) for v in value)
        return tuple(float(v) for v in value)
    return float(value)


def build_config(entries: dict, path=None) -> RunConfig:
    """Validate parsed entries into a :class:`RunConfig`."""
    kwargs: dict = {}
    for section, items in entries.items():
        if section not in _SECTIONS:
            first_line = min(line for _, line in items.values())
            raise ConfigError(f"unknown section {section!r}", path, first_line)
        for key, (value, line) in items.items():
            if key not in _SECTIONS[section]:
                raise ConfigError(f"unknown key {section}.{key}", path, line)
            target = _SECTIONS[section][key]
            try:
                kwargs.setdefault(section, {})[target] = _coerce(target, value)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{section}.{key}: {exc}", path, line) from None

    def make(section, cls, base=None):
        values = kwargs.get(section, {})
        try:
            return replace(base, **values) if base is not None else cls(**values)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid [{section}]: {exc}", path) from None

    noise_kw = dict(kwargs.get("noise", {}))
    if "sigma" in noise_kw:
        sigma = noise_kw.pop("sigma")
        noise_kw = {**{k: sigma for k in _field_names(ChannelNoise)}, **noise_kw}
    kwargs["noise"] = noise_kw

    shared = make("disturbance", PhaseDriftProfileConfig, DEFAULT_DISTURBANCE)
    dist_i = make("disturbance_i", PhaseDriftProfileConfig, shared)
    dist_q = make("disturbance_q", PhaseDriftProfileConfig, shared)
    disturbance = shared if dist_i == dist_q == shared else (dist_i, dist_q)

    cavity = make("cavity", CavityParams)
    macropulse = make("macropulse", MacropulseConfig)
    detuning = make("detuning", DetuningProfileConfig)
    try:
        macropulse.n_steps(cavity.ts)
        detuning.check_sampling(cavity.ts)
    except ValueError as exc:
        raise ConfigError(f"invalid timing: {exc}", path) from None

    scenario = Scenario(
        cavity=cavity,
        weights=make("control", ControlWeights),
        proposed_gains=make("proposed", ObserverGains),
        standard_gains=make("standard", ObserverGains, ObserverGains.standard()),
        macropulse=macropulse,
        detuning=detuning,
        phase_fwd=make("phase_fwd", PhaseDriftProfileConfig),
        phase_rec=make("phase_rec", PhaseDriftProfileConfig),
        disturbance=disturbance,
        noise=make("noise", ChannelNoise),
        options=make("observer", ModelOptions),
    )
    if not scenario.options.literal_drift:
        try:
            scenario.proposed_gains.check_smoothing()
        except ValueError as exc:
            raise ConfigError(f"invalid [proposed]: {exc}", path) from None
    if scenario.options.descent_sign not in (-1.0, 1.0):
        raise ConfigError("invalid [observer]: descent_sign must be +1 or -1", path)
    run_kw = {**kwargs.get("mc", {}), **kwargs.get("output", {})}
    try:
        run = RunOptions(**run_kw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid [mc]: {exc}", path) from None
    return RunConfig(scenario=scenario, metrics=make("metrics", MetricOptions), run=run)


def load_config(path=None) -> RunConfig:
    """Read and validate a config file; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path) from None
    return build_config(parse_config_text(text, path), path)


def loads_config(text: str) -> RunConfig:
    return build_config(parse_config_text(text, "<string>"), "<string>")
