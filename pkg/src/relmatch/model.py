"""Parameter container and full-pipeline scoring of image-text pairs."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import irm, matching, numerics as nx, srm
from .config import ModelConfig
from .errors import DimensionError
from .numerics import Param, Var
from .objective import ScoreMatrices


@dataclass
class ScorePair:
    s_hat_g: float
    s_hat_l: float


class Model:
    """Projection adapters, SRM maps and the shared head for one configuration."""

    def __init__(self, config: ModelConfig, d_in: int):
        self.config = config
        self.d_in = d_in
        rng = np.random.default_rng(config.seed)
        self.P_img = matching.init_projection(config.d, d_in, rng, "P_img")
        self.P_txt = matching.init_projection(config.d, d_in, rng, "P_txt")
        self.srm = srm.SrmParams.init(config.k, rng)
        self.irm = irm.IrmParams.init(config.k, rng)
        self.tau3 = Param(np.full((1, 1), config.tau3), "tau3", requires_grad=config.train_tau3)

    def params(self) -> list[Param]:
        return [self.P_img, self.P_txt, self.srm.f_x, self.srm.f_y,
                self.irm.g_weights, self.irm.g_bias, self.tau3]

    def trainable(self) -> list[Param]:
        return [p for p in self.params() if p.requires_grad]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.copy() for p in self.params()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for p in self.params():
            v = np.asarray(state[p.name], dtype=np.float64)
            if v.shape != p.shape:
                raise DimensionError(f"{p.name}: checkpoint shape {v.shape} != {p.shape}")
            p.value = v.copy()
            p.zero_grad()

    def param_hash(self) -> str:
        h = hashlib.sha256()
        for p in self.params():
            h.update(p.name.encode())
            h.update(np.ascontiguousarray(p.value).tobytes())
        return h.hexdigest()

    def loss_tau(self):
        return nx.reshape(self.tau3, ()) if self.config.train_tau3 else self.config.tau3


@dataclass
class Forward:
    scores: ScoreMatrices
    attention: Var | None = None  # (P, Q, M, N)
    edges: Var | None = None  # (P, Q, N, N)
    omega: Var | None = None  # (1, Q, N)
    local_sims: Var | None = None  # (P, Q, N, k)
    semantic_sims: Var | None = None
    extras: dict = field(default_factory=dict)


def forward(model: Model, images, texts) -> Forward:
    """Score every image in ``images`` (P, d_in, M) against every text (Q, d_in, N)."""
    cfg = model.config
    images = np.asarray(images, dtype=np.float64)
    texts = np.asarray(texts, dtype=np.float64)
    if images.ndim != 3 or texts.ndim != 3:
        raise DimensionError(f"expected stacked tokens, got {images.shape} and {texts.shape}")
    P, Q = images.shape[0], texts.shape[0]
    ep = matching.embed_tokens(images[:, None], texts[None], model.P_img, model.P_txt)
    s_g, S, a = matching.pair_similarities(ep, cfg.k, cfg.tau1, return_weights=True)

    E = None
    if cfg.use_srm:
        S2, E = srm.reason(S, model.srm)
    else:
        S2 = S

    N = texts.shape[-1]
    omega = None
    if cfg.use_irm:
        T_g = nx.detach(ep.T_g) if cfg.detach_importance else ep.T_g
        omega = irm.importance_weights(ep.T_l, T_g, cfg.tau2)
        weights = omega
    else:
        weights = nx.Var(np.full((1, Q, N), 1.0 / N))
    s_l = irm.aggregate_local(S2, weights, model.irm)
    s_hat_g = irm.score_global(s_g, model.irm)
    return Forward(ScoreMatrices(s_hat_g, s_l), a, E, omega, S, S2)


def pair_score_matrix(model: Model, images, texts) -> ScoreMatrices:
    return forward(model, images, texts).scores


def score_pair(model: Model, image_tokens, text_tokens) -> ScorePair:
    s = pair_score_matrix(model, np.asarray(image_tokens)[None], np.asarray(text_tokens)[None])
    return ScorePair(float(s.global_.value[0, 0]), float(s.local.value[0, 0]))


def score_arrays(model: Model, images, texts, budget: int = 2_000_000) -> tuple[np.ndarray, np.ndarray]:
    """Tape-free (global, local) score matrices, evaluated in image chunks."""
    images = np.asarray(images, dtype=np.float64)
    texts = np.asarray(texts, dtype=np.float64)
    P, Q = images.shape[0], texts.shape[0]
    per_image = Q * texts.shape[-1] * max(model.config.d, images.shape[-1])
    step = max(1, budget // max(per_image, 1))
    g = np.empty((P, Q))
    loc = np.empty((P, Q))
    with nx.no_tape():
        for start in range(0, P, step):
            s = pair_score_matrix(model, images[start:start + step], texts)
            g[start:start + step] = s.global_.value
            loc[start:start + step] = s.local.value
    return g, loc


def inference_scores(model: Model, images, texts) -> np.ndarray:
    """Scores used for ranking, chosen by ``config.inference_score``."""
    g, loc = score_arrays(model, images, texts)
    mode = model.config.inference_score
    if mode == "local":
        return loc
    if mode == "global":
        return g
    return 0.5 * (g + loc)
