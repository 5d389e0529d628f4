"""Scaled-down experiments shared by scripts/ and the acceptance suite."""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import ModelConfig, TrainConfig
from .corpus import CorpusSpec, Manifest, flip_location, generate_corpus, load_batch, load_prompts
from .evaluate import eval_grounding, eval_retrieval, eval_zeroshot, grounding_responses, pointing_game
from .model import Model, score_arrays
from .train import train

HARD_NEGATIVE_SPEC = dict(z=5, hard_negative=True, n_train=2000, n_val=10, n_test=500)

# single-module ablations plus the two loss-branch ablations
ABLATIONS = {
    "full": {},
    "no_srm": {"use_srm": False},
    "no_irm": {"use_irm": False},
    "no_global_loss": {"use_global_loss": False},
    "no_local_loss": {"use_local_loss": False, "inference_score": "global"},
}


def ensure_corpus(spec: CorpusSpec, root) -> Path:
    root = Path(root)
    if not (root / "manifest.jsonl").exists():
        generate_corpus(spec, root)
    return root


# -- hard negatives ---------------------------------------------------------

@dataclass
class Separation:
    rate: float
    mean_margin: float
    n: int


def separation(model: Model, manifest: Manifest) -> Separation:
    """Fraction of pairs whose local score prefers the true text over its location-flipped twin."""
    spec = manifest.spec()
    pairs = [p for p in load_batch(manifest, range(len(manifest))) if p.meta["class"] != 0]
    pos = np.empty(len(pairs))
    neg = np.empty(len(pairs))
    for i, p in enumerate(pairs):
        texts = np.stack([p.text_tokens, flip_location(spec, p)])
        _, loc = score_arrays(model, p.image_tokens[None], texts)
        pos[i], neg[i] = loc[0]
    margin = pos - neg
    return Separation(float(np.mean(margin > 0)), float(margin.mean()), len(pairs))


def hard_negative_experiment(root, seed: int = 0, train_cfg: TrainConfig | None = None,
                             model_seed: int = 0) -> dict[str, Separation]:
    spec = CorpusSpec(seed=seed, **HARD_NEGATIVE_SPEC)
    root = ensure_corpus(spec, root)
    manifest = Manifest.load(root)
    test = manifest.split("test")
    train_cfg = train_cfg or TrainConfig()
    out = {}
    for name, flags in (("full", {}), ("no_srm", {"use_srm": False})):
        ckpt, _ = train(ModelConfig(seed=model_seed, **flags), train_cfg, manifest)
        out[name] = separation(ckpt.to_model(), test)
    return out


# -- module ablations -------------------------------------------------------

def ablation_experiment(root, seed: int = 0, train_cfg: TrainConfig | None = None, configs=None,
                        model_seed: int = 0, retrieval_for=("full",)) -> dict[str, dict]:
    """Zero-shot metrics per configuration on the 5x200 test split (retrieval for selected rows)."""
    spec = CorpusSpec(seed=seed, n_val=10)
    root = ensure_corpus(spec, root)
    manifest = Manifest.load(root)
    test = manifest.split("test")
    prompts = load_prompts(root)
    train_cfg = train_cfg or TrainConfig()
    out = {}
    for name, flags in (configs or ABLATIONS).items():
        ckpt, _ = train(ModelConfig(seed=model_seed, **flags), train_cfg, manifest)
        model = ckpt.to_model()
        res = {k: v for k, v in eval_zeroshot(model, test, prompts).items() if k != "classes"}
        if name in retrieval_for:
            res.update(eval_retrieval(model, test))
        out[name] = res
    return out


# -- grounding --------------------------------------------------------------

def grounding_experiment(root, seed: int = 0, train_cfg: TrainConfig | None = None, model_seed: int = 0) -> dict:
    spec = CorpusSpec(seed=seed, noise_sigma=0.0, n_val=10)
    root = ensure_corpus(spec, root)
    manifest = Manifest.load(root)
    ckpt, _ = train(ModelConfig(seed=model_seed), train_cfg or TrainConfig(), manifest)
    return eval_grounding(ckpt.to_model(), manifest.split("test"), load_prompts(root))


def chance_pointing_rate(signal_sets, M: int, trials: int, seed: int) -> float:
    """Monte Carlo hit rate of a pointer choosing one of M patches uniformly at random."""
    rng = np.random.default_rng(seed)
    sets = [s for s in signal_sets if len(s)]
    picks = rng.integers(M, size=trials)
    which = rng.integers(len(sets), size=trials)
    return float(np.mean([int(p) in sets[w] for p, w in zip(picks, which)]))


def untrained_pointing_rate(root, trials: int, seed: int, d_in: int | None = None) -> tuple[float, int]:
    """Pointing-game hit rate where every trial uses a freshly initialised model and one test pair."""
    manifest = Manifest.load(root, "test")
    prompts = load_prompts(root)
    rng = np.random.default_rng(seed)
    idx = rng.integers(len(manifest), size=trials)
    d_in = d_in or manifest.spec().d_in
    hits = n = 0
    for t, i in enumerate(idx):
        pair = load_batch(manifest, [int(i)])[0]
        if not pair.signal_patches:
            continue
        model = Model(ModelConfig(seed=seed * 1_000_003 + t), d_in)
        resp = grounding_responses(model, pair.image_tokens[None], [prompts.names[pair.meta["class"]]])
        res = pointing_game(resp, [pair.signal_patches])
        hits += res["hits"]
        n += res["n"]
    return hits / n, n
