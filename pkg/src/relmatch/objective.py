"""Soft label targets and the bidirectional soft-target contrastive loss."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .errors import ContractError, DimensionError
from .numerics import Var


@dataclass
class ScoreMatrices:
    """Entry [p, q] scores image p against text q."""

    global_: Var
    local: Var


def soft_targets(labels) -> np.ndarray:
    """Cosine similarity between multi-hot label rows."""
    L = np.asarray(labels, dtype=np.float64)
    norms = np.linalg.norm(L, axis=1)
    if np.any(norms == 0):
        raise ContractError(f"all-zero label at rows {np.flatnonzero(norms == 0).tolist()}")
    U = L / norms[:, None]
    S = U @ U.T
    np.fill_diagonal(S, 1.0)
    return S


def _direction(X: Var, T: np.ndarray, tau3, axis: int, normalize: bool) -> Var:
    B = T.shape[0]
    if normalize:
        T = T / T.sum(axis=axis, keepdims=True)
    if isinstance(tau3, Var):
        logp = nx.log_softmax(nx.div(X, tau3), axis=axis)
    else:
        logp = nx.log_softmax(X, tau=tau3, axis=axis)
    return nx.scale(nx.sum(nx.mul(logp, T)), -1.0 / B)


def branch_loss(X: Var, targets: np.ndarray, tau3=1.0, normalize: bool = True) -> Var:
    """Mean of the image-to-text (rows) and text-to-image (columns) cross-entropies."""
    rows = _direction(X, targets, tau3, 1, normalize)
    cols = _direction(X, targets, tau3, 0, normalize)
    return nx.scale(nx.add(rows, cols), 0.5)


def contrastive_loss(scores: ScoreMatrices, targets, tau3=1.0, use_global: bool = True,
                     use_local: bool = True, normalize_targets: bool = True):
    """Return (total loss Var, {"global": float, "local": float})."""
    T = np.asarray(targets, dtype=np.float64)
    if not isinstance(tau3, Var):
        nx._check_tau(tau3)
    if not (use_global or use_local):
        raise ContractError("at least one loss branch must be enabled")
    branches = {}
    for name, X, on in (("global", scores.global_, use_global), ("local", scores.local, use_local)):
        if not on:
            continue
        if X.shape != T.shape or X.ndim != 2 or X.shape[0] != X.shape[1]:
            raise DimensionError(f"{name} scores {X.shape} vs targets {T.shape}")
        branches[name] = branch_loss(X, T, tau3, normalize_targets)
    total = None
    for v in branches.values():
        total = v if total is None else nx.add(total, v)
    return total, {k: v.item() for k, v in branches.items()}
