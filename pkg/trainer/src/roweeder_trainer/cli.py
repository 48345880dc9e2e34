"""Train/predict CLI for the pseudo-label segmentation model."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import TileRef, TileStore, discover_map_tiles, load_folds
from .decoders import DecoderSpec
from .errors import TrainerError
from .predict import predict_export
from .training import TrainConfig, train

_UPSAMPLE_ALIASES = {"interp": "interpolation", "deconv": "deconvolution"}


def cmd_train(args) -> int:
    folds = load_folds(args.folds)
    if not 0 <= args.fold < len(folds):
        raise TrainerError(f"fold {args.fold} outside [0, {len(folds)})")
    fold = folds[args.fold]
    train_refs = [TileRef(m, i) for m, i in fold["train_tiles"]]
    val_refs = [TileRef(m, i) for m, i in fold["val_tiles"]]

    spec = DecoderSpec(
        family=args.decoder,
        fusion=args.fusion,
        upsample=_UPSAMPLE_ALIASES.get(args.upsample, args.upsample),
        n_blocks=args.blocks,
        embed_dim=args.embed_dim,
    )
    config = TrainConfig(
        lr=args.lr,
        warmup_iters=args.warmup,
        epochs=args.epochs,
        gamma=args.gamma,
        batch_size=args.batch_size,
        seed=args.seed,
        encoder=args.encoder,
        channels=tuple(args.channels.split(",")),
    )
    store = TileStore(args.data, args.pseudo, config.channels)
    result = train(store, train_refs, val_refs, spec, config, args.out)
    summary = {
        "checkpoint": str(result.checkpoint_path),
        "log": str(result.log_path),
        "epoch_mean_losses": result.epoch_mean_losses,
        "val_losses": result.val_losses,
        "test_map": fold["test_map"],
    }
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_predict(args) -> int:
    config_channels = tuple(args.channels.split(","))
    store = TileStore(args.data, None, config_channels)
    refs = []
    for map_id in args.maps.split(","):
        refs.extend(discover_map_tiles(args.data, map_id, config_channels))
    if not refs:
        raise TrainerError("no tiles found for the requested maps")
    written = predict_export(args.checkpoint, store, refs, args.out,
                             batch_size=args.batch_size)
    print(json.dumps({"written": len(written), "out": str(Path(args.out))}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roweeder-train",
        description="Train a lightweight segmentation model on crop-row pseudo-labels.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on one cross-validation fold")
    p.add_argument("--data", required=True, help="dataset root (channel tiles)")
    p.add_argument("--pseudo", required=True, help="pseudo-label root (manifest + PNGs)")
    p.add_argument("--folds", required=True, help="folds JSON from the labeling pipeline")
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--encoder", choices=["toy", "b0"], default="toy")
    p.add_argument("--decoder", choices=["pyramid", "flat", "segformer-mlp"], default="flat")
    p.add_argument("--fusion", choices=["add", "concat"], default="add")
    p.add_argument("--upsample", choices=["interp", "deconv", "interpolation",
                                          "deconvolution"], default="interp")
    p.add_argument("--blocks", type=int, default=4)
    p.add_argument("--embed-dim", type=int, default=160)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--channels", default="R,G,B")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="export palette-PNG predictions")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--maps", required=True, help="comma list of map ids")
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--channels", default="R,G,B")
    p.set_defaults(func=cmd_predict)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (TrainerError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
