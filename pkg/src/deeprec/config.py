"""Flat ``key = value`` configuration shared by the CLI and the experiment harness."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Optional, Tuple

import numpy as np

from .errors import ConfigError
from .model import GenConfig, ProblemDims
from .trainer import TrainConfig


def _ints(text) -> Tuple[int, ...]:
    if isinstance(text, (tuple, list)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).replace(",", " ").split())


@dataclass(frozen=True)
class ExperimentConfig:
    # problem
    m: int = 40
    n: int = 3
    x_low: float = 0.0
    x_high: float = 1.0
    tau_low: float = -1.0
    tau_high: float = 4.0
    noise_low: float = 0.1
    noise_high: float = 1.0
    # randomness; derived seeds are offsets of ``seed`` unless set
    seed: int = 0
    h_seed: Optional[int] = None
    test_seed: Optional[int] = None
    # recovery
    k_layers: int = 90
    delta: float = 0.01
    perturb_scale: float = 0.0
    # training
    epochs: int = 2000
    batch_size: int = 500
    batches_per_epoch: int = 1
    lr0: float = 1e-3
    decay_rate: float = 0.97
    decay_every: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: Optional[float] = None
    eval_every: int = 10
    val_size: int = 2000
    # experiments
    k_values: Tuple[int, ...] = (5, 10, 20, 40, 90)
    m_values: Tuple[int, ...] = (10, 20, 40, 80, 160)
    test_trials: int = 1000
    runtime_runs: int = 100
    warmup_runs: int = 5
    weights_dir: Optional[str] = None

    def __post_init__(self):
        if self.test_trials < 1 or self.runtime_runs < 1:
            raise ConfigError("test_trials and runtime_runs must be >= 1")
        if self.k_layers < 1 or not self.delta > 0:
            raise ConfigError("k_layers must be >= 1 and delta > 0")
        if not self.k_values or not self.m_values:
            raise ConfigError("sweep lists must be non-empty")
        self.gen_config()  # validates the distribution bounds

    # -- derived configs ----------------------------------------------------

    def gen_config(self, m: int = None) -> GenConfig:
        return GenConfig(
            dims=ProblemDims(self.m if m is None else int(m), self.n),
            x_low=self.x_low,
            x_high=self.x_high,
            tau_low=self.tau_low,
            tau_high=self.tau_high,
            noise_low=self.noise_low,
            noise_high=self.noise_high,
            seed=self.seed,
        )

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            epochs=self.epochs,
            batches_per_epoch=self.batches_per_epoch,
            lr0=self.lr0,
            decay_rate=self.decay_rate,
            decay_every=self.decay_every,
            adam_beta1=self.beta1,
            adam_beta2=self.beta2,
            adam_eps=self.eps,
            grad_clip=self.grad_clip,
            eval_every=self.eval_every,
            val_size=self.val_size,
            seed=int(seed),
        )

    def derived_seed(self, purpose: str, *keys: int) -> int:
        """Independent, reproducible seed for one purpose and sweep point."""
        explicit = {"h": self.h_seed, "test": self.test_seed}.get(purpose)
        tag = {"h": 1, "test": 2, "train": 3, "init": 4}[purpose]
        base = self.seed if explicit is None else explicit
        ss = np.random.SeedSequence(entropy=int(base), spawn_key=(tag,) + tuple(int(k) for k in keys))
        return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)

    # -- mapping / file io --------------------------------------------------

    def to_mapping(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = ",".join(str(i) for i in v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        kw = {}
        for key, raw in mapping.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kw[key] = _coerce(key, raw, known[key].type)
        return cls(**kw)

    def replace(self, **changes) -> "ExperimentConfig":
        mapping = self.to_mapping()
        mapping.update(changes)
        return ExperimentConfig.from_mapping(mapping)


def _coerce(key, raw, typ):
    typ = str(typ)
    if raw is None or (isinstance(raw, str) and raw.strip().lower() in ("", "none")):
        if "Optional" in typ:
            return None
        raise ConfigError(f"{key} may not be empty")
    try:
        if "Tuple" in typ:
            return _ints(raw)
        if "str" in typ:
            return str(raw)
        if "int" in typ:
            f = float(raw)
            if f != int(f):
                raise ValueError
            return int(f)
        return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_config_text(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment; blank lines ignored."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"config line {lineno}: empty key")
        out[key] = value
    return out


def format_config(mapping: dict) -> str:
    lines = []
    for key, value in mapping.items():
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {'none' if value is None else value}")
    return "\n".join(lines) + "\n"


def load_config(path=None, overrides: Iterable[str] = ()) -> ExperimentConfig:
    """Read a config file (optional) then apply ``key=value`` overrides in order."""
    mapping = {}
    if path is not None:
        mapping.update(parse_config_text(Path(path).read_text()))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        mapping[key.strip()] = value.strip()
    return ExperimentConfig.from_mapping(mapping)


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(format_config(cfg.to_mapping()))


def gen_config_to_text(cfg: GenConfig) -> str:
    return format_config(cfg.to_dict())


def gen_config_from_text(text: str) -> GenConfig:
    return GenConfig.from_dict(parse_config_text(text))
