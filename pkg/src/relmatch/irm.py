"""Text-guided importance weighting and the shared scoring head."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .errors import DimensionError
from .numerics import Param, Var


@dataclass
class IrmParams:
    g_weights: Param  # (1, k)
    g_bias: Param  # (1, 1)

    @classmethod
    def init(cls, k: int, rng: np.random.Generator) -> "IrmParams":
        # start as the mean block cosine; signed random weights let training
        # settle on anti-aligned blocks that a plain cosine map cannot see
        # the bias cannot change a shift-invariant loss, so it is frozen
        return cls(Param(np.full((1, k), 1.0 / k), "g_weights"),
                   Param(np.zeros((1, 1)), "g_bias", requires_grad=False))


def importance_weights(T_l, T_g, tau2: float) -> Var:
    """Softmax over words of <T_l[:, i], T_g> / tau2, shape (..., N)."""
    T_l, T_g = nx.as_var(T_l), nx.as_var(T_g)
    if T_g.shape[-1] != T_l.shape[-2]:
        raise DimensionError(f"word reps {T_l.shape} vs global text {T_g.shape}")
    raw = nx.matmul(nx.reshape(T_g, T_g.shape[:-1] + (1, T_g.shape[-1])), T_l)
    raw = nx.reshape(raw, raw.shape[:-2] + (raw.shape[-1],))
    return nx.softmax(raw, tau=tau2, axis=-1)


def head(x, params: IrmParams) -> Var:
    """g(x) = w . x + b for x of shape (..., k)."""
    x = nx.as_var(x)
    k = params.g_weights.shape[-1]
    if x.shape[-1] != k:
        raise DimensionError(f"head expects length {k}, got {x.shape}")
    y = nx.matmul(nx.reshape(x, x.shape[:-1] + (1, k)), nx.swap_last(params.g_weights))
    return nx.add(nx.reshape(y, x.shape[:-1]), nx.reshape(params.g_bias, ()))


def aggregate_local(S2, omega, params: IrmParams) -> Var:
    """g(sum_i omega_i s''_i); S2 is (..., N, k), omega is (..., N)."""
    S2, omega = nx.as_var(S2), nx.as_var(omega)
    if omega.shape[-1] != S2.shape[-2]:
        raise DimensionError(f"{omega.shape[-1]} weights for {S2.shape[-2]} local-matchings")
    pooled = nx.matmul(nx.reshape(omega, omega.shape[:-1] + (1, omega.shape[-1])), S2)
    pooled = nx.reshape(pooled, pooled.shape[:-2] + (pooled.shape[-1],))
    return head(pooled, params)


def score_global(s_g, params: IrmParams) -> Var:
    return head(s_g, params)
