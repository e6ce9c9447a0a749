"""Command line: generate synthetic data, train the mirror model, export
archives, and run the parity check against the inference engine."""

from __future__ import annotations

import argparse
import json
import sys
import tempfile

import numpy as np
import torch

from . import hkwf, parity, synth
from .model import MirrorModel
from .train import TrainConfig, train_toy


def cmd_make_data(args) -> int:
    ann = synth.write_dataset(args.out, args.count, args.seed, args.size)
    print(f"wrote {args.count} samples; annotations at {ann}")
    return 0


def cmd_train(args) -> int:
    config = TrainConfig(input_size=args.size, max_epochs=args.epochs,
                         seed=args.seed)
    torch.manual_seed(config.seed)
    model = MirrorModel(config.input_size)
    train_x, train_kp, _ = synth.load_arrays(args.data)
    val_x, val_kp, _ = synth.load_arrays(args.val_data)
    history = train_toy(model, train_x, train_kp, val_x, val_kp, config)
    model.eval()
    hkwf.save(model.export_entries(), args.out)
    print(f"exported archive to {args.out} "
          f"(final val PCK {history['val_pck'][-1]:.3f})")
    return 0


def cmd_parity(args) -> int:
    torch.manual_seed(args.seed)
    model = MirrorModel(args.size)
    # give random batch-norm statistics some spread so the check is not
    # trivially exercising the identity normalization
    rng = np.random.default_rng(args.seed)
    for bn in model.bns.values():
        bn.running_mean.copy_(torch.from_numpy(
            rng.normal(0, 0.05, bn.num_features).astype(np.float32)))
        bn.running_var.copy_(torch.from_numpy(
            rng.uniform(0.5, 1.5, bn.num_features).astype(np.float32)))
    with tempfile.TemporaryDirectory() as workdir:
        report = parity.parity_report(model, args.data, workdir)
    report.pop("per_image")
    print(json.dumps(report, indent=2))
    if args.out:
        parity.write_report(report, args.out)
    return 0 if report["passes"] else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="handkp-trainer")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-data", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=112)
    p.set_defaults(func=cmd_make_data)

    p = sub.add_parser("train", help="train at toy scale and export an archive")
    p.add_argument("--data", required=True, help="training annotation file")
    p.add_argument("--val-data", required=True, help="held-out annotation file")
    p.add_argument("--out", required=True, help="output archive path")
    p.add_argument("--size", type=int, default=112)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("parity", help="check forward parity with the engine")
    p.add_argument("--data", required=True, help="annotation file of fixtures")
    p.add_argument("--out", default=None, help="optional JSON report path")
    p.add_argument("--size", type=int, default=112)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_parity)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
