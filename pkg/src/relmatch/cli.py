"""Command-line entry point: ``relmatch <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import ModelConfig, TrainConfig
from .corpus import CorpusSpec, Manifest, generate_corpus, load_prompts
from .diagnostics import full_grad_check, primitive_grad_checks
from .errors import FormatError
from .evaluate import eval_grounding, eval_retrieval, eval_zeroshot
from .export import export_attention
from .train import Checkpoint, train

GRAD_TOL = 1e-6
DEFAULT_K = (1, 4, 12)
ABLATION_FIELDS = ["use_srm", "use_irm", "use_global_loss", "use_local_loss", "k", "steps",
                   "accuracy", "precision", "f1", "auroc",
                   "i2t_P@1", "i2t_P@5", "i2t_P@10", "t2i_P@1", "t2i_P@5", "t2i_P@10", "P@Sum"]


def _load_json(path) -> dict:
    return json.loads(Path(path).read_text()) if path else {}


def _emit(result: dict, json_path: str | None) -> None:
    text = json.dumps(result, indent=2, sort_keys=True)
    if json_path:
        Path(json_path).write_text(text + "\n")
    print(text)


def cmd_gen_data(args) -> int:
    spec = CorpusSpec.from_dict(_load_json(args.spec))
    root = generate_corpus(spec, args.out)
    print(f"wrote corpus to {root}")
    return 0


def cmd_train(args) -> int:
    model_cfg = ModelConfig.from_file(args.model) if args.model else ModelConfig()
    train_cfg = TrainConfig.from_file(args.train) if args.train else TrainConfig()
    train_cfg = replace(train_cfg, checkpoint_path=args.out, log_path=args.log or train_cfg.log_path)
    ckpt, records = train(model_cfg, train_cfg, Manifest.load(args.data))
    print(json.dumps({"step": ckpt.step, "final_loss": records[-1]["loss"], "checkpoint": args.out}))
    return 0


def cmd_grad_check(args) -> int:
    if args.full:
        reports = {"end_to_end": full_grad_check(args.seed, args.eps)}
    else:
        reports = primitive_grad_checks(args.seed, args.eps)
    worst = max(r.max_rel_error for r in reports.values())
    for name, r in reports.items():
        print(f"{name:12s} max_rel_error={r.max_rel_error:.3e} at {r.param}{list(map(int, r.index))} "
              f"analytic={r.analytic:.6e} numeric={r.numeric:.6e}")
    ok = worst <= GRAD_TOL
    print(f"{'PASS' if ok else 'FAIL'} worst={worst:.3e} tol={GRAD_TOL:g}")
    return 0 if ok else 1


def cmd_eval(args) -> int:
    model = Checkpoint.load(args.ckpt).to_model()
    test = Manifest.load(args.data, "test")
    if args.task == "retrieval":
        result = eval_retrieval(model, test)
    elif args.task == "zeroshot":
        result = eval_zeroshot(model, test, load_prompts(args.data))
    else:
        result = eval_grounding(model, test, load_prompts(args.data))
    _emit(result, args.json)
    return 0


def cmd_export(args) -> int:
    model = Checkpoint.load(args.ckpt).to_model()
    manifest = Manifest.load(args.data)
    prefix = Path(args.out) / f"{args.pair}_w{args.word}"
    files = export_attention(model, manifest, args.pair, args.word, prefix, args.srm_graph, args.irm_weights)
    print(json.dumps({k: str(v) for k, v in files.items()}))
    return 0


def parse_grid(text: str) -> dict[str, list]:
    """'srm,irm,k' or 'k=1,4,12' -> axis name -> values."""
    axes: dict[str, list] = {}
    current = None
    for tok in [t.strip() for t in text.split(",") if t.strip()]:
        if "=" in tok:
            current, first = tok.split("=", 1)
            axes[current] = [int(first)]
        elif tok.lstrip("-").isdigit() and current is not None:
            axes[current].append(int(tok))
        else:
            current = None
            axes[tok] = []
    out = {}
    for name, vals in axes.items():
        if name in ("srm", "irm"):
            out[f"use_{name}"] = [True, False]
        elif name == "loss":
            out["loss"] = [(True, True), (True, False), (False, True)]
        elif name == "k":
            out["k"] = vals or list(DEFAULT_K)
        else:
            raise ValueError(f"unknown ablation axis {name!r}")
    return out


def ablation_rows(grid: dict[str, list], base: ModelConfig, train_cfg: TrainConfig, data) -> list[dict]:
    manifest = Manifest.load(data)
    test = manifest.split("test")
    prompts = load_prompts(data)
    rows = []
    names = list(grid)
    for combo in itertools.product(*(grid[n] for n in names)):
        overrides = {}
        for n, v in zip(names, combo):
            if n == "loss":
                overrides["use_global_loss"], overrides["use_local_loss"] = v
            else:
                overrides[n] = v
        cfg = replace(base, **overrides)
        ckpt, _ = train(cfg, replace(train_cfg, checkpoint_path=None, log_path=None), manifest)
        model = ckpt.to_model()
        row = {f: getattr(cfg, f) for f in ABLATION_FIELDS[:5]}
        row["steps"] = ckpt.step
        row.update({k: v for k, v in eval_zeroshot(model, test, prompts).items() if k != "classes"})
        row.update(eval_retrieval(model, test))
        rows.append(row)
    return rows


def cmd_ablate(args) -> int:
    base = ModelConfig.from_file(args.model) if args.model else ModelConfig()
    train_cfg = TrainConfig.from_file(args.train) if args.train else TrainConfig()
    if args.steps:
        train_cfg = replace(train_cfg, steps=args.steps, warmup_steps=min(train_cfg.warmup_steps, args.steps))
    rows = ablation_rows(parse_grid(args.grid), base, train_cfg, args.data)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        wr = csv.DictWriter(out, fieldnames=ABLATION_FIELDS)
        wr.writeheader()
        wr.writerows(rows)
    finally:
        if args.out:
            out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="relmatch", description="Relation-aware image-text matching on synthetic data")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-data", help="generate a synthetic paired corpus")
    s.add_argument("--spec", help="JSON corpus spec (defaults when omitted)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("train", help="train a model on a corpus")
    s.add_argument("--model", help="JSON model config")
    s.add_argument("--train", help="JSON training config")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--log", help="JSONL log path")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("grad-check", help="analytic vs finite-difference gradients")
    s.add_argument("--full", action="store_true", help="end-to-end loss on the micro problem")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--eps", type=float, default=1e-5)
    s.set_defaults(func=cmd_grad_check)

    s = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    s.add_argument("task", choices=["retrieval", "zeroshot", "grounding"])
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--json", help="also write the result here")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("export-attention", help="dump one word's attention map")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--pair", required=True)
    s.add_argument("--word", type=int, required=True)
    s.add_argument("--srm-graph", action="store_true")
    s.add_argument("--irm-weights", action="store_true")
    s.add_argument("--out", default=".")
    s.set_defaults(func=cmd_export)

    s = sub.add_parser("ablate", help="train and evaluate a grid of configurations")
    s.add_argument("--grid", required=True, help="e.g. 'srm,irm,k' or 'k=1,4,12'")
    s.add_argument("--data", required=True)
    s.add_argument("--model", help="JSON base model config")
    s.add_argument("--train", help="JSON training config")
    s.add_argument("--steps", type=int, help="override training steps")
    s.add_argument("--out", help="CSV path (stdout when omitted)")
    s.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, LookupError, FileNotFoundError, FormatError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
