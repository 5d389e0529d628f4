"""Zero-shot accuracy of the full model against module and loss-branch ablations."""
import argparse
import csv
import sys

from relmatch.config import TrainConfig
from relmatch.experiments import ABLATIONS, ablation_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", default="runs/ablation", help="corpus directory (generated if missing)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--steps", type=int, default=TrainConfig.steps)
    ap.add_argument("--retrieval", action="store_true", help="also score retrieval for every row")
    args = ap.parse_args()
    cfg = TrainConfig(steps=args.steps, warmup_steps=min(TrainConfig.warmup_steps, args.steps))
    res = ablation_experiment(args.data, args.seed, cfg,
                              retrieval_for=tuple(ABLATIONS) if args.retrieval else ("full",))
    keys = sorted({k for r in res.values() for k in r})
    wr = csv.writer(sys.stdout)
    wr.writerow(["config"] + keys)
    for name, r in res.items():
        wr.writerow([name] + [f"{r[k]:.4f}" if k in r else "" for k in keys])


if __name__ == "__main__":
    main()
