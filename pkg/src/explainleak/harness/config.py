"""Experiment configuration: INI files in, dataclasses out, plain dicts for echo.

Example::

    [experiment]
    seed = 0

    [data]
    source = blobs
    n = 512
    d = 32
    k = 2
    separation = 1.0

    [model]
    hidden_sizes = 16, 16

    [train]
    learning_rate = 0.02
    epochs = 150
    minibatch_size = 8

    [dp]
    epsilon = 1.0

    [attack]
    methods = IXG
    kinds = Variance, L1, L2, Loss
    n_shadow = 16
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from ..explainkit import GS_NOISE_STD, GS_SAMPLES, IG_STEPS, Method, ScoreKind
from ..numcore import MlpConfig

EPSILON_GRID = (0.5, 1.0, 2.0, 8.0, math.inf)


class ConfigError(ValueError):
    pass


@dataclass
class DataSpec:
    source: str = "blobs"
    n: int = 512
    d: int = 32
    k: int = 2
    separation: float = 1.0
    seed: Optional[int] = None  # None -> master seed
    path: Optional[str] = None
    label_column: str = "label"


@dataclass
class TrainSpec:
    learning_rate: float = 0.02
    epochs: int = 150
    minibatch_size: int = 8
    shared_init: bool = True


@dataclass
class DpSpec:
    """Present in a config only for the private arm.

    Exactly one of ``epsilon`` (calibrated) or ``noise_multiplier`` (fixed) is set.
    The private arm keeps its own schedule: larger Poisson lots and a short run
    keep the calibrated noise small enough for the model to learn at all on a
    few hundred examples.  Setting ``learning_rate`` / ``epochs`` /
    ``sampling_rate`` to ``none`` falls back to the training spec, with
    ``q = minibatch_size / training-set size``.
    """

    epsilon: Optional[float] = None
    noise_multiplier: Optional[float] = None
    delta: float = 1e-5
    stability_constant: float = 0.01
    learning_rate: Optional[float] = 0.5
    epochs: Optional[int] = 10
    sampling_rate: Optional[float] = 0.25


@dataclass
class AttackSpec:
    methods: Tuple[Method, ...] = (Method.IXG,)
    kinds: Tuple[ScoreKind, ...] = (ScoreKind.VARIANCE, ScoreKind.L1, ScoreKind.L2, ScoreKind.LOSS)
    n_shadow: int = 16
    threshold_baseline: bool = True
    ig_steps: int = IG_STEPS
    gs_samples: int = GS_SAMPLES
    gs_noise_std: float = GS_NOISE_STD


@dataclass
class ExperimentConfig:
    data: DataSpec = field(default_factory=DataSpec)
    hidden_sizes: Tuple[int, ...] = (16, 16)
    train: TrainSpec = field(default_factory=TrainSpec)
    dp: Optional[DpSpec] = None
    attack: AttackSpec = field(default_factory=AttackSpec)
    seed: int = 0

    @property
    def n_models(self) -> int:
        return self.attack.n_shadow + 1

    def mlp_config(self, input_dim: int, num_classes: int) -> MlpConfig:
        return MlpConfig(input_dim, self.hidden_sizes, num_classes)

    def validate(self) -> "ExperimentConfig":
        d = self.data
        if d.source not in ("blobs", "csv"):
            raise ConfigError(f"data.source must be 'blobs' or 'csv', got {d.source!r}")
        if d.source == "csv" and not d.path:
            raise ConfigError("data.source = csv needs data.path")
        if d.source == "blobs":
            if d.n < 4 or d.n % 2:
                raise ConfigError(f"data.n must be even and >= 4, got {d.n}")
            if d.k < 2 or d.d < 2 or d.k > d.d:
                raise ConfigError(f"blobs need 2 <= k <= d, got k={d.k}, d={d.d}")
        if self.attack.n_shadow < 2:
            raise ConfigError(f"attack.n_shadow must be >= 2, got {self.attack.n_shadow}")
        if not self.attack.methods and any(k is not ScoreKind.LOSS for k in self.attack.kinds):
            raise ConfigError("explanation-based kinds need at least one method")
        if not self.attack.kinds:
            raise ConfigError("attack.kinds is empty")
        if any(h < 1 for h in self.hidden_sizes):
            raise ConfigError(f"hidden sizes must be positive, got {self.hidden_sizes}")
        t = self.train
        if t.learning_rate <= 0 or t.epochs < 0 or t.minibatch_size < 1:
            raise ConfigError(f"invalid train spec {t}")
        if self.dp is not None:
            p = self.dp
            if (p.epsilon is None) == (p.noise_multiplier is None):
                raise ConfigError("dp needs exactly one of epsilon or noise_multiplier")
            if p.epsilon is not None and not p.epsilon > 0:
                raise ConfigError(f"dp.epsilon must be > 0, got {p.epsilon}")
            if p.noise_multiplier is not None and not p.noise_multiplier > 0:
                raise ConfigError(f"dp.noise_multiplier must be > 0, got {p.noise_multiplier}")
            if not 0 < p.delta < 1:
                raise ConfigError(f"dp.delta must be in (0, 1), got {p.delta}")
            if p.sampling_rate is not None and not 0 < p.sampling_rate <= 1:
                raise ConfigError(f"dp.sampling_rate must be in (0, 1], got {p.sampling_rate}")
        return self

    def to_dict(self) -> Dict[str, Any]:
        def plain(v):
            if isinstance(v, (Method, ScoreKind)):
                return v.value
            if isinstance(v, (tuple, list)):
                return [plain(x) for x in v]
            if isinstance(v, float) and math.isinf(v):
                return "inf"
            return v

        out = {
            "experiment": {"seed": self.seed},
            "data": {k: plain(v) for k, v in dataclasses.asdict(self.data).items()},
            "model": {"hidden_sizes": list(self.hidden_sizes), "activation": "gelu"},
            "train": {k: plain(v) for k, v in dataclasses.asdict(self.train).items()},
            "attack": {f.name: plain(getattr(self.attack, f.name)) for f in dataclasses.fields(self.attack)},
        }
        if self.dp is not None:
            out["dp"] = {k: plain(v) for k, v in dataclasses.asdict(self.dp).items()}
        return out


# ---------------------------------------------------------------- parsing

def _none_or(conv):
    def parse(text: str):
        text = text.strip()
        return None if text.lower() in ("", "none", "null") else conv(text)
    return parse


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_tuple(text: str) -> Tuple[int, ...]:
    return tuple(int(p) for p in text.replace(",", " ").split())


def _methods(text: str) -> Tuple[Method, ...]:
    return tuple(Method(p.strip().upper()) for p in text.split(",") if p.strip())


def _kinds(text: str) -> Tuple[ScoreKind, ...]:
    return tuple(ScoreKind.parse(p) for p in text.split(",") if p.strip())


def _float(text: str) -> float:
    return float(text.strip())


_FIELDS = {
    "data": {"source": str.strip, "n": int, "d": int, "k": int, "separation": _float,
             "seed": _none_or(int), "path": _none_or(str), "label_column": str.strip},
    "train": {"learning_rate": _float, "epochs": int, "minibatch_size": int, "shared_init": _bool},
    "dp": {"epsilon": _none_or(_float), "noise_multiplier": _none_or(_float), "delta": _float,
           "stability_constant": _float, "learning_rate": _none_or(_float), "epochs": _none_or(int),
           "sampling_rate": _none_or(_float)},
    "attack": {"methods": _methods, "kinds": _kinds, "n_shadow": int, "threshold_baseline": _bool,
               "ig_steps": int, "gs_samples": int, "gs_noise_std": _float},
}


def _section(parser, name, cls):
    kwargs = {}
    for key, raw in parser.items(name):
        if key not in _FIELDS[name]:
            raise ConfigError(f"unknown key [{name}] {key}")
        try:
            kwargs[key] = _FIELDS[name][key](raw)
        except ValueError as exc:
            raise ConfigError(f"[{name}] {key} = {raw!r}: {exc}") from None
    return cls(**kwargs)


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), default_section="__none__")
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    unknown = set(parser.sections()) - {"experiment", "data", "model", "train", "dp", "attack"}
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    cfg = ExperimentConfig()
    try:
        if parser.has_section("experiment"):
            for key, raw in parser.items("experiment"):
                if key != "seed":
                    raise ConfigError(f"unknown key [experiment] {key}")
                cfg.seed = int(raw)
        if parser.has_section("model"):
            for key, raw in parser.items("model"):
                if key == "activation":
                    if raw.strip().lower() != "gelu":
                        raise ConfigError("only the gelu activation is supported")
                elif key == "hidden_sizes":
                    cfg.hidden_sizes = _int_tuple(raw)
                else:
                    raise ConfigError(f"unknown key [model] {key}")
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    for name, cls, attr in (("data", DataSpec, "data"), ("train", TrainSpec, "train"),
                            ("dp", DpSpec, "dp"), ("attack", AttackSpec, "attack")):
        if parser.has_section(name):
            setattr(cfg, attr, _section(parser, name, cls))
    if cfg.dp is not None and cfg.dp.epsilon is not None and math.isinf(cfg.dp.epsilon):
        cfg.dp = None
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def dump_config(cfg: ExperimentConfig) -> str:
    """INI text that parses back to an equal config."""
    lines = []
    for section, values in cfg.to_dict().items():
        if section == "model":
            values = {"hidden_sizes": values["hidden_sizes"]}
        lines.append(f"[{section}]")
        for key, value in values.items():
            if isinstance(value, list):
                value = ", ".join(str(v) for v in value)
            elif value is None:
                value = "none"
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)


def with_overrides(cfg: ExperimentConfig, *, seed=None, epochs=None, n_shadow=None, epsilon=None) -> ExperimentConfig:
    cfg = dataclasses.replace(cfg, data=dataclasses.replace(cfg.data), train=dataclasses.replace(cfg.train),
                              attack=dataclasses.replace(cfg.attack),
                              dp=None if cfg.dp is None else dataclasses.replace(cfg.dp))
    if seed is not None:
        cfg.seed = seed
    if epochs is not None:
        cfg.train.epochs = epochs
    if n_shadow is not None:
        cfg.attack.n_shadow = n_shadow
    if epsilon is not None:
        if math.isinf(epsilon):
            cfg.dp = None
        else:
            base = cfg.dp or DpSpec()
            cfg.dp = dataclasses.replace(base, epsilon=epsilon, noise_multiplier=None)
    return cfg.validate()
