"""Experiment configuration: one JSON document, unknown keys rejected, cross-checked on load."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .codec import CodecConfig
from .data import SynthConfig
from .model import ModelConfig, TrainConfig
from .signal import StftConfig


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class SynthSection:
    n_sequences: int = 48
    n_test: int = 10
    T: int = 192
    fps: float = 30.0
    beat_period: int = 12
    D_m: int = 5
    noise_std: float = 0.0
    n_styles: int = 2


@dataclass(frozen=True)
class CodecSection:
    lam: int = 4
    k_cb: int = 64
    c_code: int = 16
    hidden: int = 64
    beta: float = 0.25
    steps: int = 800
    batch: int = 128
    lr: float = 2e-3
    revive_every: int = 100


@dataclass(frozen=True)
class ModelSection:
    d: int = 32
    n_heads: int = 4
    depth: int = 1
    layers: int = 1
    state: int = 4
    expand: int = 2
    conv_width: int = 4
    gate_position: str = "post"
    use_rhythm: bool = True
    head_init_std: float = 0.02


@dataclass(frozen=True)
class TrainSection:
    lr: float = 3e-3
    steps: int = 500
    batch: int = 8
    grad_clip: float = 1.0
    optimizer: str = "adam"


@dataclass(frozen=True)
class MetricsSection:
    sigma: float = 3.0
    min_gap: int = 6  # music frames; half the beat period by default


@dataclass(frozen=True)
class GenerateSection:
    n_pieces: int = 10
    temperature: float = 0.0


@dataclass(frozen=True)
class StftSection:
    fft_len: int = 16
    hop: int = 1
    window: str = "hann"
    pad: str = "reflect"


SECTIONS = {
    "synth": SynthSection,
    "stft": StftSection,
    "codec": CodecSection,
    "model": ModelSection,
    "train": TrainSection,
    "metrics": MetricsSection,
    "generate": GenerateSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    workdir: Path = Path("run")
    seed: int = 0
    synth: SynthSection = field(default_factory=SynthSection)
    stft: StftSection = field(default_factory=StftSection)
    codec: CodecSection = field(default_factory=CodecSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)
    generate: GenerateSection = field(default_factory=GenerateSection)

    # views onto the module-level config types -----------------------------
    def synth_config(self, test: bool = False) -> SynthConfig:
        s = self.synth
        return SynthConfig(n_sequences=s.n_test if test else s.n_sequences, T=s.T, fps=s.fps,
                           beat_period=s.beat_period, D_m=s.D_m, noise_std=s.noise_std,
                           seed=self.seed + (1 if test else 0), n_styles=s.n_styles)

    def stft_config(self) -> StftConfig:
        return StftConfig(**dataclasses.asdict(self.stft))

    def codec_config(self) -> CodecConfig:
        return CodecConfig(**dataclasses.asdict(self.codec), seed=self.seed)

    def model_config(self) -> ModelConfig:
        return ModelConfig(d_m=self.synth.D_m, k_cb=self.codec.k_cb, stft=self.stft_config(),
                           **dataclasses.asdict(self.model))

    def train_config(self) -> TrainConfig:
        return TrainConfig(**dataclasses.asdict(self.train), seed=self.seed)

    def to_dict(self) -> dict[str, Any]:
        out = {"workdir": str(self.workdir), "seed": self.seed}
        out.update({name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS})
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _coerce(path: str, value: Any, proto: Any) -> Any:
    kind = type(proto)
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    raise ConfigError(path, "unsupported field type")


def _section(name: str, raw: Any):
    cls = SECTIONS[name]
    if not isinstance(raw, dict):
        raise ConfigError(name, "expected an object")
    defaults = cls()
    known = {f.name for f in dataclasses.fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{name}.{key}", "unknown key")
    return cls(**{k: _coerce(f"{name}.{k}", v, getattr(defaults, k)) for k, v in raw.items()})


def from_dict(raw: dict[str, Any], base_dir: Path | None = None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a JSON object")
    for key in raw:
        if key not in ("workdir", "seed", *SECTIONS):
            raise ConfigError(key, "unknown key")
    kwargs: dict[str, Any] = {name: _section(name, raw[name]) for name in SECTIONS if name in raw}
    if "seed" in raw:
        kwargs["seed"] = _coerce("seed", raw["seed"], 0)
    workdir = Path(_coerce("workdir", raw.get("workdir", "run"), ""))
    if base_dir is not None and not workdir.is_absolute():
        workdir = base_dir / workdir
    cfg = ExperimentConfig(workdir=workdir, **kwargs)
    validate(cfg)
    return cfg


def apply_overrides(raw: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
    """``key=value`` pairs with dotted keys; values parse as JSON, else as plain strings."""
    raw = json.loads(json.dumps(raw))
    for item in overrides:
        key, sep, text = item.partition("=")
        if not sep or not key:
            raise ConfigError(item, "override must look like key=value")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(key, "cannot descend into a non-object")
        node[parts[-1]] = value
    return raw


def load(path, overrides: list[str] | None = None) -> ExperimentConfig:
    p = Path(path)
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError("--config", f"no such file {p}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return from_dict(apply_overrides(raw, overrides or []), p.resolve().parent)


def _check(ok: bool, name: str, message: str):
    if not ok:
        raise ConfigError(name, message)


def validate(cfg: ExperimentConfig):
    s, c, m, t = cfg.synth, cfg.codec, cfg.model, cfg.train
    _check(cfg.seed >= 0, "seed", "must be >= 0")
    _check(s.n_sequences >= 2, "synth.n_sequences", "must be >= 2")
    _check(s.n_test >= 2, "synth.n_test", "must be >= 2")
    _check(s.beat_period >= 2, "synth.beat_period", "must be >= 2")
    _check(s.fps > 0, "synth.fps", "must be > 0")
    _check(s.D_m >= 1, "synth.D_m", "must be >= 1")
    _check(s.noise_std >= 0, "synth.noise_std", "must be >= 0")
    _check(s.n_styles >= 1, "synth.n_styles", "must be >= 1")
    _check(c.lam >= 1, "codec.lam", "must be >= 1")
    _check(s.T % c.lam == 0, "synth.T", f"must be divisible by codec.lam={c.lam}")
    _check(s.T // c.lam >= 3, "synth.T", "must give at least 3 code steps")
    _check(c.k_cb >= 2, "codec.k_cb", "must be >= 2")
    for name in ("c_code", "hidden", "steps", "batch"):
        _check(getattr(c, name) >= 1, f"codec.{name}", "must be >= 1")
    _check(c.lr > 0, "codec.lr", "must be > 0")
    _check(m.n_heads >= 1, "model.n_heads", "must be >= 1")
    _check(m.d >= 1 and m.d % m.n_heads == 0, "model.d", f"must be divisible by model.n_heads={m.n_heads}")
    _check(m.depth >= 1, "model.depth", "must be >= 1")
    _check(m.layers >= 0, "model.layers", "must be >= 0")
    _check(m.state >= 1, "model.state", "must be >= 1")
    _check(m.expand >= 1, "model.expand", "must be >= 1")
    _check(m.conv_width >= 0, "model.conv_width", "must be >= 0")
    _check(m.gate_position in ("pre", "post"), "model.gate_position", "must be 'pre' or 'post'")
    _check(t.lr > 0, "train.lr", "must be > 0")
    _check(t.steps >= 1, "train.steps", "must be >= 1")
    _check(t.batch >= 1, "train.batch", "must be >= 1")
    _check(t.optimizer in ("adam", "sgd"), "train.optimizer", "must be 'adam' or 'sgd'")
    _check(cfg.metrics.sigma > 0, "metrics.sigma", "must be > 0")
    _check(cfg.metrics.min_gap >= 1, "metrics.min_gap", "must be >= 1")
    _check(cfg.generate.n_pieces >= 2, "generate.n_pieces", "must be >= 2")
    _check(cfg.generate.n_pieces <= s.n_test, "generate.n_pieces", "must not exceed synth.n_test")
    _check(cfg.generate.temperature >= 0, "generate.temperature", "must be >= 0")
    try:
        cfg.stft_config()
    except ValueError as exc:
        raise ConfigError("stft", str(exc)) from None
