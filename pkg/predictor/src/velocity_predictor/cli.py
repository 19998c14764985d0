"""Command-line entry points: synth / train / infer."""
from __future__ import annotations

import argparse
import sys

from highway_planner.core import load_scenario

from .data import (
    KINDS,
    export_profile,
    load_dataset,
    split_dataset,
    synthesize_episodes,
)
from .encoding import EncoderConfig
from .model import load_model, predict_velocities, save_model
from .training import train


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="velocity-predictor",
        description="Velocity-profile prediction over vectorized traffic scenes.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic scenario documents")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kind", choices=KINDS, default="car_following")

    p = sub.add_parser("train", help="fit a model on a directory of episodes")
    p.add_argument("--data", required=True, help="directory of scenario documents")
    p.add_argument("--out", required=True, help="model output path")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("infer", help="predict a profile for one scenario document")
    p.add_argument("--scenario", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="profile output path")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    cfg = EncoderConfig()

    if args.command == "synth":
        paths = synthesize_episodes(args.out, args.episodes, args.seed, cfg,
                                    kind=args.kind)
        print(f"wrote {len(paths)} episodes to {args.out}")
        return 0

    if args.command == "train":
        examples = load_dataset(args.data, cfg)
        train_items, val_items, test_items = split_dataset(examples, seed=args.seed)
        model, report = train(train_items, val_items, cfg, epochs=args.epochs,
                              seed=args.seed)
        save_model(model, args.out)
        print(f"trained on {len(train_items)} episodes "
              f"({len(val_items)} val, {len(test_items)} test)")
        print(f"final train MSE {report.epoch_losses[-1]:.6f}  "
              f"val MSE {report.val_losses[-1]:.6f}")
        print(f"val ADE {report.ade:.4f} m  FDE {report.fde:.4f} m")
        return 0

    with open(args.scenario) as fh:
        scenario = load_scenario(fh.read())
    model = load_model(args.model)
    velocities = predict_velocities(model, scenario, model.cfg)
    export_profile(velocities, args.out)
    print(f"wrote {velocities.size}-step profile to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
