"""Pointing-game score after training on a noiseless corpus, against untrained models."""
import argparse
import json

from relmatch.config import TrainConfig
from relmatch.corpus import Manifest
from relmatch.experiments import chance_pointing_rate, grounding_experiment, untrained_pointing_rate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", default="runs/grounding", help="corpus directory (generated if missing)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--steps", type=int, default=TrainConfig.steps)
    ap.add_argument("--trials", type=int, default=2000)
    args = ap.parse_args()
    cfg = TrainConfig(steps=args.steps, warmup_steps=min(TrainConfig.warmup_steps, args.steps))
    trained = grounding_experiment(args.data, args.seed, cfg)
    test = Manifest.load(args.data, "test")
    chance = chance_pointing_rate([e["signal_patches"] for e in test.entries], test.spec().M, 100_000, args.seed)
    untrained, n = untrained_pointing_rate(args.data, args.trials, args.seed)
    print(json.dumps({"trained": trained, "chance_mc": chance, "untrained": untrained, "untrained_trials": n}, indent=2))


if __name__ == "__main__":
    main()
