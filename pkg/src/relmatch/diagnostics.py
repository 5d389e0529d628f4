"""Gradient-check entry points used by the CLI and the acceptance suite."""
from __future__ import annotations

import numpy as np

from . import numerics as nx
from .config import ModelConfig
from .model import Model
from .numerics import GradCheckReport, Param
from .train import batch_loss


def micro_problem(seed: int = 0, B: int = 3, d: int = 4, k: int = 2, M: int = 2, N: int = 2,
                  d_in: int = 4, z: int = 3, generic_heads: bool = False, **flags):
    """Random model and batch small enough for coordinate-wise finite differences.

    ``generic_heads`` replaces the identity SRM maps and constant head with
    random draws, which makes oracle comparisons sharper.
    """
    rng = np.random.default_rng(seed)
    model = Model(ModelConfig(d=d, k=k, seed=seed, **flags), d_in)
    if generic_heads:
        hrng = np.random.default_rng([seed, 1])
        bound = 1.0 / np.sqrt(k)
        for p in (model.srm.f_x, model.srm.f_y, model.irm.g_weights):
            p.value = hrng.uniform(-bound, bound, p.shape)
    images = rng.normal(size=(B, d_in, M))
    texts = rng.normal(size=(B, d_in, N))
    labels = (rng.uniform(size=(B, z)) < 0.5).astype(float)
    labels[labels.sum(axis=1) == 0, 0] = 1.0
    return model, images, texts, labels


def full_grad_check(seed: int = 0, eps: float = 1e-5, generic_heads: bool = False, **flags) -> GradCheckReport:
    """End-to-end loss gradient versus central differences for every trainable Param."""
    model, images, texts, labels = micro_problem(seed, generic_heads=generic_heads, **flags)
    return nx.grad_check(lambda: batch_loss(model, images, texts, labels)[0], model.trainable(), eps)


def primitive_grad_checks(seed: int = 0, eps: float = 1e-5) -> dict[str, GradCheckReport]:
    rng = np.random.default_rng(seed)
    cases = {
        "matmul": ((3, 4), (4, 2), nx.matmul),
        "add": ((3, 1), (1, 4), nx.add),
        "mul": ((2, 3), (2, 3), nx.mul),
        "div": ((2, 3), (2, 3), lambda a, b: nx.div(a, nx.add(nx.mul(b, b), 1.0))),
        "softmax": ((3, 5), None, lambda a, _: nx.softmax(a, tau=4.0, axis=0)),
        "log_softmax": ((4, 3), None, lambda a, _: nx.log_softmax(a, axis=1)),
        "cosine": ((3, 6), (6,), nx.cosine),
        "sum": ((3, 4), None, lambda a, _: nx.sum(a, axis=0)),
        "transpose": ((2, 3, 4), None, lambda a, _: nx.transpose(a, (1, 2, 0))),
    }
    out = {}
    for name, (sa, sb, op) in cases.items():
        a = Param(rng.normal(size=sa), "a")
        b = Param(rng.normal(size=sb), "b") if sb else None
        params = [a] + ([b] if b is not None else [])
        with nx.no_tape():
            w = rng.normal(size=op(a, b).shape)
        out[name] = nx.grad_check(lambda: nx.sum(nx.mul(op(a, b), w)), params, eps)
    return out
