"""Model and training configuration (JSON files on disk)."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError

SCORE_CHOICES = ("local", "global", "mean")


def _from_mapping(cls, d: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**d)


@dataclass
class ModelConfig:
    d: int = 48
    k: int = 12
    tau1: float = 4.0
    tau2: float = 5.0
    tau3: float = 1.0
    use_srm: bool = True
    use_irm: bool = True
    use_global_loss: bool = True
    use_local_loss: bool = True
    detach_importance: bool = False
    normalize_targets: bool = True
    train_tau3: bool = False
    inference_score: str = "local"
    seed: int = 0

    def __post_init__(self):
        if self.k < 1 or self.d % self.k:
            raise ConfigError(f"d={self.d} must be a positive multiple of k={self.k}")
        for t in ("tau1", "tau2", "tau3"):
            if not getattr(self, t) > 0:
                raise ConfigError(f"{t} must be positive")
        if not (self.use_global_loss or self.use_local_loss):
            raise ConfigError("enable at least one of use_global_loss / use_local_loss")
        if self.inference_score not in SCORE_CHOICES:
            raise ConfigError(f"inference_score must be one of {SCORE_CHOICES}")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return _from_mapping(cls, d)

    @classmethod
    def from_file(cls, path) -> "ModelConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 32
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    warmup_steps: int = 200
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    checkpoint_path: str | None = None
    log_path: str | None = None

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if not 0 < self.warmup_steps <= self.steps:
            raise ConfigError("warmup_steps must lie in (0, steps]")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 for a contrastive loss")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate must be > 0 and weight_decay >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return _from_mapping(cls, d)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)
