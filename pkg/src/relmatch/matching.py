"""Token embedding, cross-attention local matching and block-wise similarity.

All functions accept leading batch dimensions. Shapes use d for the embedding
width, M for image patches and N for words; a matrix of tokens is (d, M) or
(d, N) with one token per column.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .errors import ConfigError, DimensionError
from .numerics import Param, Var


@dataclass
class EmbeddedPair:
    I_l: Var  # (..., d, M)
    T_l: Var  # (..., d, N)
    I_g: Var  # (..., d)
    T_g: Var  # (..., d)


def init_projection(d: int, d_in: int, rng: np.random.Generator, name: str) -> Param:
    bound = 1.0 / np.sqrt(d_in)
    return Param(rng.uniform(-bound, bound, size=(d, d_in)), name)


def embed_tokens(image_tokens, text_tokens, P_img: Var, P_txt: Var) -> EmbeddedPair:
    image_tokens = nx.as_var(image_tokens)
    text_tokens = nx.as_var(text_tokens)
    for P, X, what in ((P_img, image_tokens, "image"), (P_txt, text_tokens, "text")):
        if X.ndim < 2 or P.shape[-1] != X.shape[-2]:
            raise DimensionError(f"{what} projection {P.shape} does not fit tokens {X.shape}")
    I_l = nx.matmul(P_img, image_tokens)
    T_l = nx.matmul(P_txt, text_tokens)
    return EmbeddedPair(I_l, T_l, nx.mean(I_l, axis=-1), nx.sum(T_l, axis=-1))


def embed(pair, P_img: Var, P_txt: Var) -> EmbeddedPair:
    """Project one TokenPair; the global text vector is the word sum, the image one the patch mean."""
    return embed_tokens(pair.image_tokens, pair.text_tokens, P_img, P_txt)


def attention_weights(I_l, T_l, tau1: float) -> Var:
    """a[..., j, i]: weight of patch j for word i (each column sums to 1)."""
    scores = nx.matmul(nx.swap_last(I_l), T_l)
    return nx.softmax(scores, tau=tau1, axis=-2)


def cross_attend(I_l, T_l, tau1: float, return_weights: bool = False):
    """Attention-weighted patch mixture for every word: V has shape (..., d, N)."""
    a = attention_weights(I_l, T_l, tau1)
    V = nx.matmul(I_l, a)
    return (V, a) if return_weights else V


def block_similarity(t, v, k: int) -> Var:
    """Cosine of matching contiguous channel blocks: (..., d) x (..., d) -> (..., k)."""
    t, v = nx.as_var(t), nx.as_var(v)
    d = t.shape[-1]
    if v.shape[-1] != d:
        raise DimensionError(f"block_similarity width mismatch: {t.shape} vs {v.shape}")
    if k < 1 or d % k:
        raise ConfigError(f"d={d} is not divisible by k={k}")
    tb = nx.reshape(t, t.shape[:-1] + (k, d // k))
    vb = nx.reshape(v, v.shape[:-1] + (k, d // k))
    return nx.cosine(tb, vb, axis=-1)


def pair_similarities(ep: EmbeddedPair, k: int, tau1: float = 4.0, return_weights: bool = False):
    """Global block similarity (..., k) and one local block similarity per word (..., N, k)."""
    s_g = block_similarity(ep.T_g, ep.I_g, k)
    V, a = cross_attend(ep.I_l, ep.T_l, tau1, return_weights=True)
    S = block_similarity(nx.swap_last(ep.T_l), nx.swap_last(V), k)
    return (s_g, S, a) if return_weights else (s_g, S)
