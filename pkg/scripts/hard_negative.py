"""Location-flip separation of the local score, with and without SRM."""
import argparse
import json

from relmatch.config import TrainConfig
from relmatch.experiments import hard_negative_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", default="runs/hard_negative", help="corpus directory (generated if missing)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--steps", type=int, default=TrainConfig.steps)
    args = ap.parse_args()
    cfg = TrainConfig(steps=args.steps, warmup_steps=min(TrainConfig.warmup_steps, args.steps))
    res = hard_negative_experiment(args.data, args.seed, cfg)
    print(json.dumps({k: vars(v) for k, v in res.items()}, indent=2))


if __name__ == "__main__":
    main()
