"""AdamW training with linear warmup and cosine decay, plus checkpoints."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import numerics as nx
from .config import ModelConfig, TrainConfig
from .errors import ContractError
from .model import Model, forward
from .objective import contrastive_loss, soft_targets


def lr_at(t: int, cfg: TrainConfig) -> float:
    """Learning rate used at step t (1-based)."""
    if t <= cfg.warmup_steps:
        return cfg.learning_rate * t / cfg.warmup_steps
    frac = (t - cfg.warmup_steps) / (cfg.steps - cfg.warmup_steps)
    return cfg.learning_rate * 0.5 * (1.0 + math.cos(math.pi * frac))


def batch_loss(model: Model, images, texts, labels):
    """Contrastive loss of one batch of paired tokens; returns (loss Var, branch losses)."""
    cfg = model.config
    scores = forward(model, images, texts).scores
    return contrastive_loss(scores, soft_targets(labels), model.loss_tau(),
                            cfg.use_global_loss, cfg.use_local_loss, cfg.normalize_targets)


@dataclass
class Checkpoint:
    model_config: ModelConfig
    train_config: TrainConfig
    d_in: int
    step: int
    params: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]
    rng_state: dict

    def to_model(self) -> Model:
        m = Model(self.model_config, self.d_in)
        m.load_state_dict(self.params)
        return m

    def save(self, path) -> None:
        def enc(d):
            return {k: {"shape": list(v.shape), "data": v.reshape(-1).tolist()} for k, v in d.items()}

        doc = {
            "model_config": self.model_config.to_dict(),
            # output paths are run plumbing; leaving them out keeps checkpoints location-independent
            "train_config": {**self.train_config.to_dict(), "checkpoint_path": None, "log_path": None},
            "d_in": self.d_in,
            "step": self.step,
            "params": enc(self.params),
            "adam_m": enc(self.adam_m),
            "adam_v": enc(self.adam_v),
            "rng_state": self.rng_state,
        }
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def load(cls, path) -> "Checkpoint":
        doc = json.loads(Path(path).read_text())

        def dec(d):
            return {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in d.items()}

        return cls(ModelConfig.from_dict(doc["model_config"]), TrainConfig.from_dict(doc["train_config"]),
                   doc["d_in"], doc["step"], dec(doc["params"]), dec(doc["adam_m"]), dec(doc["adam_v"]),
                   doc["rng_state"])


class Trainer:
    """Holds model, optimiser moments and the batch sampler for one run."""

    def __init__(self, model_cfg: ModelConfig, train_cfg: TrainConfig, images, texts, labels,
                 checkpoint: Checkpoint | None = None):
        self.images = np.asarray(images, dtype=np.float64)
        self.texts = np.asarray(texts, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.float64)
        if len(self.images) < train_cfg.batch_size:
            raise ContractError(f"{len(self.images)} training pairs < batch size {train_cfg.batch_size}")
        self.model_cfg = model_cfg
        self.cfg = train_cfg
        self.model = Model(model_cfg, self.images.shape[1])
        self.rng = np.random.default_rng(model_cfg.seed)
        self.step_count = 0
        self.m = {p.name: np.zeros_like(p.value) for p in self.model.trainable()}
        self.v = {p.name: np.zeros_like(p.value) for p in self.model.trainable()}
        if checkpoint is not None:
            self.model.load_state_dict(checkpoint.params)
            self.m = {k: v.copy() for k, v in checkpoint.adam_m.items()}
            self.v = {k: v.copy() for k, v in checkpoint.adam_v.items()}
            self.rng.bit_generator.state = checkpoint.rng_state
            self.step_count = checkpoint.step

    def step(self) -> dict:
        cfg = self.cfg
        t = self.step_count + 1
        idx = self.rng.choice(len(self.images), size=cfg.batch_size, replace=False)
        params = self.model.trainable()
        for p in params:
            p.zero_grad()
        with nx.Tape() as tape:
            loss, branches = batch_loss(self.model, self.images[idx], self.texts[idx], self.labels[idx])
        nx.backward(tape, loss)

        lr = lr_at(t, cfg)
        b1, b2 = cfg.beta1, cfg.beta2
        for p in params:
            m = self.m[p.name] = b1 * self.m[p.name] + (1 - b1) * p.grad
            v = self.v[p.name] = b2 * self.v[p.name] + (1 - b2) * p.grad * p.grad
            m_hat = m / (1 - b1**t)
            v_hat = v / (1 - b2**t)
            p.value = p.value - lr * (m_hat / (np.sqrt(v_hat) + cfg.adam_eps) + cfg.weight_decay * p.value)
        if self.model_cfg.train_tau3:
            self.model.tau3.value = np.maximum(self.model.tau3.value, 1e-3)
        self.step_count = t
        return {"step": t, "lr": lr, "loss": loss.item(),
                "loss_global": branches.get("global"), "loss_local": branches.get("local")}

    def run(self, until: int | None = None, log=None) -> list[dict]:
        until = self.cfg.steps if until is None else min(until, self.cfg.steps)
        records = []
        while self.step_count < until:
            rec = self.step()
            records.append(rec)
            if log is not None:
                log.write(json.dumps(rec) + "\n")
        return records

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(self.model_cfg, self.cfg, self.images.shape[1], self.step_count,
                          self.model.state_dict(), {k: v.copy() for k, v in self.m.items()},
                          {k: v.copy() for k, v in self.v.items()}, self.rng.bit_generator.state)


def train(model_cfg: ModelConfig, train_cfg: TrainConfig, manifest, until: int | None = None) -> tuple[Checkpoint, list[dict]]:
    """Train on the manifest's train split; writes checkpoint/log when the config names paths."""
    data = manifest.split("train") if any(e["split"] != "train" for e in manifest.entries) else manifest
    images, texts, labels = data.arrays()
    trainer = Trainer(model_cfg, train_cfg, images, texts, labels)
    if train_cfg.log_path:
        with open(train_cfg.log_path, "w") as log:
            records = trainer.run(until, log)
    else:
        records = trainer.run(until)
    ckpt = trainer.checkpoint()
    if train_cfg.checkpoint_path:
        ckpt.save(train_cfg.checkpoint_path)
    return ckpt, records
