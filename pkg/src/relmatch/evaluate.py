"""Retrieval, zero-shot classification and pointing-game evaluation."""
from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from . import numerics as nx
from .corpus import Manifest, PromptSet
from .errors import ContractError
from .model import Model, inference_scores, score_arrays


# -- metric kernels (score matrices in, numbers out) ------------------------

def top_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k highest scores per row; ties go to the lower index."""
    order = np.argsort(-scores, axis=1, kind="stable")
    return order[:, :k]


def precision_at_k(scores: np.ndarray, query_classes, cand_classes, ks=(1, 5, 10)) -> dict[int, float]:
    query_classes = np.asarray(query_classes)
    cand_classes = np.asarray(cand_classes)
    n_cand = scores.shape[1]
    out = {}
    for k in ks:
        if k > n_cand:
            raise ContractError(f"K={k} exceeds the candidate pool of {n_cand}")
        hits = cand_classes[top_k(scores, k)] == query_classes[:, None]
        out[k] = float(hits.mean())
    return out


def retrieval_metrics(scores: np.ndarray, image_classes, text_classes, ks=(1, 5, 10)) -> dict:
    """P@K for image->text (rows) and text->image (columns); P@Sum in percent."""
    i2t = precision_at_k(scores, image_classes, text_classes, ks)
    t2i = precision_at_k(scores.T, text_classes, image_classes, ks)
    out = {f"i2t_P@{k}": v for k, v in i2t.items()}
    out.update({f"t2i_P@{k}": v for k, v in t2i.items()})
    out["P@Sum"] = 100.0 * (sum(i2t.values()) + sum(t2i.values()))
    return out


def auroc(scores, positive) -> float:
    """Mann-Whitney AUROC with midranks for ties."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ContractError("AUROC needs both positive and negative examples")
    ranks = rankdata(scores)
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def classification_metrics(class_scores: np.ndarray, truth) -> dict:
    """Accuracy, macro precision/F1 and macro one-vs-rest AUROC.

    ``class_scores`` is (n, C); ``truth`` holds column indices. Prediction is
    the argmax, ties resolved to the lowest column.
    """
    truth = np.asarray(truth)
    C = class_scores.shape[1]
    pred = np.argmax(class_scores, axis=1)
    precisions, f1s, aucs = [], [], []
    for c in range(C):
        tp = np.sum((pred == c) & (truth == c))
        fp = np.sum((pred == c) & (truth != c))
        fn = np.sum((pred != c) & (truth == c))
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        precisions.append(prec)
        f1s.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
        aucs.append(auroc(class_scores[:, c], truth == c))
    return {"accuracy": float(np.mean(pred == truth)),
            "precision": float(np.mean(precisions)),
            "f1": float(np.mean(f1s)),
            "auroc": float(np.mean(aucs))}


def pointing_game(responses: np.ndarray, signal_sets) -> dict:
    """Hit iff the first maximal response lies in the pair's signal set.

    Pairs with an empty signal set are skipped and counted.
    """
    hits = n = skipped = 0
    for r, sig in zip(responses, signal_sets):
        if len(sig) == 0:
            skipped += 1
            continue
        n += 1
        hits += int(int(np.argmax(r)) in set(sig))
    return {"score": hits / n if n else float("nan"), "hits": hits, "n": n, "skipped": skipped}


# -- model-level evaluators -------------------------------------------------

def eval_retrieval(model: Model, manifest: Manifest, ks=(1, 5, 10)) -> dict:
    images, texts, _ = manifest.arrays()
    classes = manifest.classes()
    scores = inference_scores(model, images, texts)
    return retrieval_metrics(scores, classes, classes, ks)


def zeroshot_class_scores(model: Model, images, prompts: PromptSet, classes) -> np.ndarray:
    """Mean inference score of each image against each class's prompt variants, (n, C)."""
    out = np.empty((len(images), len(classes)))
    for j, c in enumerate(classes):
        if c not in prompts.texts:
            raise ContractError(f"no prompts for class {c}")
        g, loc = score_arrays(model, images, prompts.texts[c])
        mode = model.config.inference_score
        s = loc if mode == "local" else g if mode == "global" else 0.5 * (g + loc)
        out[:, j] = s.mean(axis=1)
    return out


def eval_zeroshot(model: Model, manifest: Manifest, prompts: PromptSet, classes=None) -> dict:
    images, _, _ = manifest.arrays()
    truth_cls = manifest.classes()
    if classes is None:
        classes = sorted(set(truth_cls.tolist()))
    col = {c: j for j, c in enumerate(classes)}
    truth = np.array([col[c] for c in truth_cls])
    res = classification_metrics(zeroshot_class_scores(model, images, prompts, classes), truth)
    res["classes"] = list(classes)
    return res


def grounding_responses(model: Model, images, queries) -> np.ndarray:
    """cosine(T_g of each query text, every projected patch): (n, M).

    ``queries`` holds one (d_in, n_words) token matrix per image.
    """
    with nx.no_tape():
        I_l = nx.matmul(model.P_img, np.asarray(images)).value  # (n, d, M)
        T_g = np.stack([model.P_txt.value @ q.sum(axis=-1) for q in queries])  # (n, d)
        return nx.cosine(np.swapaxes(I_l, 1, 2), T_g[:, None, :], axis=-1).value


def eval_grounding(model: Model, manifest: Manifest, prompts: PromptSet) -> dict:
    images, _, _ = manifest.arrays()
    classes = manifest.classes()
    queries = [prompts.names[int(c)] for c in classes]
    resp = grounding_responses(model, images, queries)
    return pointing_game(resp, [e["signal_patches"] for e in manifest.entries])
