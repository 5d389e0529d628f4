"""Graph attention over local-matchings.

Nodes are the N word-level similarity vectors of one image-text pair, stored
node-major as (..., N, k). Every node attends to every node, itself included;
edge weights are normalised over the source node.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .errors import DimensionError
from .numerics import Param, Var


@dataclass
class SrmParams:
    f_x: Param
    f_y: Param

    @classmethod
    def init(cls, k: int, rng: np.random.Generator) -> "SrmParams":
        # identity start: nodes begin as their raw block similarities, so no
        # block enters the score with a flipped sign
        return cls(Param(np.eye(k), "f_x"), Param(np.eye(k), "f_y"))


def project_nodes(S, p: SrmParams) -> tuple[Var, Var]:
    """Source and target projections; row x of each is f @ s'_x."""
    S = nx.as_var(S)
    k = S.shape[-1]
    if p.f_x.shape != (k, k) or p.f_y.shape != (k, k):
        raise DimensionError(f"SRM maps {p.f_x.shape}, {p.f_y.shape} do not match k={k}")
    return nx.matmul(S, nx.swap_last(p.f_x)), nx.matmul(S, nx.swap_last(p.f_y))


def edge_weights(P_src, P_dst) -> Var:
    """E[..., x, y] = softmax over x of <P_src[x], P_dst[y]>."""
    logits = nx.matmul(P_src, nx.swap_last(P_dst))
    return nx.softmax(logits, tau=1.0, axis=-2)


def propagate(E, P_src) -> Var:
    """s''_y = sum_x E[x, y] * P_src[x]."""
    return nx.matmul(nx.swap_last(E), P_src)


def reason(S, p: SrmParams) -> tuple[Var, Var]:
    """Semantic-enhanced vectors (..., N, k) and the edge matrix (..., N, N)."""
    P_src, P_dst = project_nodes(S, p)
    E = edge_weights(P_src, P_dst)
    return propagate(E, P_src), E
