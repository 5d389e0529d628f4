"""Attention, edge-weight and importance-weight export (CSV + PGM)."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from . import numerics as nx
from .corpus import Manifest, load_batch
from .errors import ContractError
from .model import Model, forward


def minmax(a: np.ndarray) -> np.ndarray:
    """Scale to [0, 1]; a constant array maps to 0.5 everywhere."""
    lo, hi = float(a.min()), float(a.max())
    if hi - lo <= 0.0:
        return np.full_like(a, 0.5, dtype=np.float64)
    return (a - lo) / (hi - lo)


def write_pgm(values01: np.ndarray, path) -> None:
    """8-bit binary PGM (P5) of a 2-D array of values in [0, 1]."""
    img = np.clip(np.rint(np.asarray(values01) * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + img.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError(f"{path} is not a binary PGM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


def write_attention(weights: np.ndarray, grid: tuple[int, int], out_prefix) -> dict[str, Path]:
    """CSV (patch, row, col, weight, normalized) and PGM heatmap for one word's patch weights."""
    out_prefix = Path(out_prefix)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    h, w = grid
    norm = minmax(weights)
    csv_path = out_prefix.with_name(out_prefix.name + "_attention.csv")
    with open(csv_path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["patch", "row", "col", "weight", "normalized"])
        for j, (a, n) in enumerate(zip(weights, norm)):
            wr.writerow([j, j // w, j % w, repr(float(a)), repr(float(n))])
    pgm_path = out_prefix.with_name(out_prefix.name + "_attention.pgm")
    write_pgm(norm.reshape(h, w), pgm_path)
    return {"csv": csv_path, "pgm": pgm_path}


def _write_matrix(path: Path, header: list[str], rows) -> Path:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(header)
        wr.writerows(rows)
    return path


def export_attention(model: Model, manifest: Manifest, pair_id: str, word: int, out_prefix,
                     srm_graph: bool = False, irm_weights: bool = False) -> dict[str, Path]:
    """Cross-attention of ``word`` over the patches of ``pair_id``; optionally its edges and weights."""
    try:
        idx = manifest.index_of(pair_id)
    except KeyError:
        raise LookupError(f"unknown pair id {pair_id!r}") from None
    pair = load_batch(manifest, [idx])[0]
    N = pair.text_tokens.shape[1]
    if not 0 <= word < N:
        raise ContractError(f"word index {word} outside [0, {N})")
    with nx.no_tape():
        f = forward(model, pair.image_tokens[None], pair.text_tokens[None])
    out = write_attention(f.attention.value[0, 0, :, word], manifest.spec().grid, out_prefix)
    out_prefix = Path(out_prefix)
    if srm_graph:
        if f.edges is None:
            raise ContractError("model has no SRM graph (use_srm=false)")
        E = f.edges.value[0, 0]
        out["srm"] = _write_matrix(out_prefix.with_name(out_prefix.name + "_srm_edges.csv"),
                                   ["source"] + [f"to_{y}" for y in range(N)],
                                   [[x] + [repr(float(v)) for v in E[x]] for x in range(N)])
    if irm_weights:
        if f.omega is None:
            raise ContractError("model has no IRM weights (use_irm=false)")
        om = f.omega.value[0, 0]
        out["irm"] = _write_matrix(out_prefix.with_name(out_prefix.name + "_irm_weights.csv"),
                                   ["word", "omega"], [[i, repr(float(v))] for i, v in enumerate(om)])
    return out
