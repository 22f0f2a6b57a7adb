"""Command-line interface: synth-data / train / embed."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import data as data_mod
from . import model as model_mod


def cmd_synth_data(args):
    data_mod.make_synthetic_dataset(args.out, alphabets=args.alphabets,
                                    chars=args.chars, writers=args.writers,
                                    seed=args.seed,
                                    deform_scale=args.deform)
    print(f"wrote {args.alphabets * args.chars} character classes to {args.out}")


def cmd_train(args):
    spec = model_mod.train(args.data, epochs=args.epochs, seed=args.seed,
                           dim=args.dim, batch_size=args.batch_size,
                           batches_per_epoch=args.batches_per_epoch,
                           lr=args.lr)
    model_mod.save_spec(spec, args.out)
    print(f"validation pair accuracy: {spec.val_accuracy:.4f} -> {args.out}")


def cmd_embed(args):
    spec = model_mod.load_spec(args.model)
    with open(args.manifest) as fh:
        manifest = json.load(fh)
    feats = model_mod.embed_page(spec, args.page, manifest,
                                 threshold=args.threshold)
    from cipherpipe.features import export_features
    export_features(feats, args.out)
    print(f"{feats.n} x {feats.d} feature vectors -> {args.out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snn-embedder",
                                     description="Siamese glyph embedder")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a synthetic Omniglot-layout dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--alphabets", type=int, default=8)
    p.add_argument("--chars", type=int, default=12)
    p.add_argument("--writers", type=int, default=12)
    p.add_argument("--deform", type=float, default=0.03)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train", help="train the Siamese network on character pairs")
    p.add_argument("--data", required=True, help="Omniglot-layout dataset directory")
    p.add_argument("--out", required=True, help="model file (.pt)")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--batches-per-epoch", type=int, default=60)
    p.add_argument("--lr", type=float, default=1e-3)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="export per-glyph features for a segmented page")
    p.add_argument("--model", required=True)
    p.add_argument("--page", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=int, default=128)
    p.set_defaults(func=cmd_embed)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (FileNotFoundError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
