"""Command-line pipeline: synth, ingest, folds, pseudo-label, evaluate, render.

Every stage is independently runnable on the shared on-disk layout, all
reports are JSON, and every command is deterministic under a fixed
config+seed (byte-identical artifacts, regardless of --jobs).

Exit codes: 0 success, 1 runtime failure, 2 config/usage error.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image

from . import dataset as ds
from .config import ConfigError, PipelineConfig, load_config
from .errors import RoweederError
from .metrics import (
    N_CLASSES,
    empty_confusion,
    confusion,
    evaluate_masks,
    f1_scores,
    row_partition_selectors,
)
from .pseudolabel import run_tile_pipeline
from .raster import (
    BinaryMask,
    read_binarymask_png,
    read_channel_raster,
    read_classmask_png,
    write_binarymask_png,
    write_classmask_png,
)

CROP_RGB = (0, 255, 0)
WEED_RGB = (255, 0, 0)
ROW_RGB = (160, 32, 240)  # purple row overlay


def _json_dump(data, out_path: str | None) -> None:
    text = json.dumps(data, indent=2, sort_keys=True)
    if out_path:
        Path(out_path).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _f1_block(scores) -> dict:
    return scores.as_dict()


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    config = load_config(args.config)
    seed = args.seed if args.seed is not None else config.seed
    angles = [float(a) for a in args.angles.split(",")] if args.angles else [0.0]
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    manifest: dict = {"tile_size": args.tile_size or config.tile_size, "maps": {}}
    for i in range(args.maps):
        spec = ds.SyntheticFieldSpec(
            dims=(args.size, args.size),
            n_rows=args.rows,
            row_angle=angles[i % len(angles)],
            row_spacing=args.spacing,
            crop_blob_radius=args.blob_radius,
            n_inter_row_weeds=args.inter_weeds,
            n_intra_row_weeds=args.intra_weeds,
            rng_seed=seed + i,
        )
        map_id = f"{i:03d}"
        synth = ds.generate_synthetic_field(spec, map_id=map_id)
        n_tiles = ds.write_map_tiles(
            synth.field_map, out_root, manifest["tile_size"]
        )
        manifest["maps"][map_id] = {
            "alignment_angle_deg": synth.field_map.alignment_angle,
            "n_tiles": n_tiles,
            "row_lines": [[rho, theta] for rho, theta in synth.row_lines],
            "row_angle_deg": spec.row_angle,
            "seed": spec.rng_seed,
        }
    (out_root / ds.MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    print(f"wrote {args.maps} synthetic map(s) under {out_root}")
    return 0


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    config = load_config(args.config)
    root = Path(args.input)
    manifest = ds.load_root_manifest(root)
    channel_dirs = ds.channel_dirs_from_manifest(manifest)
    map_ids = args.maps.split(",") if args.maps else ds.discover_map_ids(root)
    if not map_ids:
        raise RoweederError(f"no maps found under {root}")
    report: dict = {"root": str(root), "tile_size": config.tile_size, "maps": {}}
    for map_id in map_ids:
        angle = manifest.get("maps", {}).get(map_id, {}).get("alignment_angle_deg")
        tiles = ds.load_tiles(root, map_id, channel_dirs, config.tile_size, angle)
        report["maps"][map_id] = {
            "n_tiles": len(tiles),
            "channels": sorted(tiles[0].channels),
            "has_groundtruth": tiles[0].gt is not None,
            "tile_shape": list(tiles[0].shape),
            "alignment_angle_deg": angle,
        }
    _json_dump(report, args.out)
    return 0


# ---------------------------------------------------------------------------
# folds
# ---------------------------------------------------------------------------


def cmd_folds(args) -> int:
    config = load_config(args.config)
    root = Path(args.input)
    manifest = ds.load_root_manifest(root)
    channel_dirs = ds.channel_dirs_from_manifest(manifest)
    map_ids = args.maps.split(",") if args.maps else ds.discover_map_ids(root)
    if not args.maps and not args.include_excluded:
        map_ids = [m for m in map_ids if m not in ds.EXCLUDED_FOLD_MAPS]
    maps = []
    for map_id in map_ids:
        angle = manifest.get("maps", {}).get(map_id, {}).get("alignment_angle_deg")
        tiles = ds.load_tiles(root, map_id, channel_dirs, config.tile_size, angle)
        # Represent each map by its pooled tile count; pre-cut tiles keep
        # their own indices.
        maps.append((map_id, [t.index for t in tiles]))
    if len(maps) < 2:
        raise ConfigError("need at least 2 maps to build folds")
    folds_out = []
    ordered = sorted(maps)
    for fold_idx, (test_map, _) in enumerate(ordered):
        pooled = [
            (map_id, idx)
            for map_id, indices in ordered
            if map_id != test_map
            for idx in indices
        ]
        rng = np.random.default_rng([config.seed, fold_idx])
        perm = rng.permutation(len(pooled))
        n_val = int(np.floor(args.val_fraction * len(pooled)))
        folds_out.append(
            {
                "test_map": test_map,
                "train_maps": [m for m, _ in ordered if m != test_map],
                "val_tiles": [list(pooled[i]) for i in perm[:n_val]],
                "train_tiles": [list(pooled[i]) for i in perm[n_val:]],
            }
        )
    _json_dump(
        {
            "seed": config.seed,
            "tile_size": config.tile_size,
            "val_fraction": args.val_fraction,
            "folds": folds_out,
        },
        args.out,
    )
    return 0


# ---------------------------------------------------------------------------
# pseudo-label
# ---------------------------------------------------------------------------


def cmd_pseudo_label(args) -> int:
    config = load_config(args.config)
    root = Path(args.input)
    out_root = Path(args.out)
    manifest_in = ds.load_root_manifest(root)
    channel_dirs = ds.channel_dirs_from_manifest(manifest_in)
    map_ids = args.maps.split(",") if args.maps else ds.discover_map_ids(root)
    if not map_ids:
        raise RoweederError(f"no maps found under {root}")

    written: list[Path] = []
    run_manifest: dict = {"config": config.to_dict(), "maps": {}}
    try:
        for map_id in map_ids:
            angle = manifest_in.get("maps", {}).get(map_id, {}).get("alignment_angle_deg")
            tiles = ds.load_tiles(root, map_id, channel_dirs, config.tile_size, angle)
            with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
                outcomes = list(pool.map(lambda t: run_tile_pipeline(t, config), tiles))
            map_dir = out_root / map_id
            map_dir.mkdir(parents=True, exist_ok=True)
            entries = []
            for tile, outcome in zip(tiles, outcomes):
                pseudo_path = map_dir / f"{tile.index}_pseudo.png"
                rows_path = map_dir / f"{tile.index}_rows.png"
                write_classmask_png(outcome.result.mask, pseudo_path)
                written.append(pseudo_path)
                write_binarymask_png(outcome.row_mask, rows_path)
                written.append(rows_path)
                entries.append(
                    {
                        "index": tile.index,
                        "rows_retained": outcome.result.rows_retained,
                        "n_crop_instances": outcome.result.n_crop_instances,
                        "n_weed_instances": outcome.result.n_weed_instances,
                        "n_lines": len(outcome.detection.lines),
                        "ks_statistic": outcome.detection.ks_statistic,
                        "p_value": outcome.detection.p_value,
                        "alignment_angle_deg": outcome.alignment_angle,
                        "pseudo": f"{map_id}/{tile.index}_pseudo.png",
                        "rows": f"{map_id}/{tile.index}_rows.png",
                    }
                )
            run_manifest["maps"][map_id] = {"tiles": entries}
    except Exception:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    manifest_path = out_root / "manifest.json"
    manifest_path.write_text(json.dumps(run_manifest, indent=2, sort_keys=True) + "\n")
    summary = {
        "maps": len(run_manifest["maps"]),
        "tiles": sum(len(m["tiles"]) for m in run_manifest["maps"].values()),
        "out": str(out_root),
    }
    print(json.dumps(summary, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

_TILE_KEY_RE = re.compile(r"^(\d+)")


def _discover_classmasks(root: Path) -> dict[tuple[str, int], Path]:
    """Tile key -> class-mask path. Understands both the dataset layout
    (<map>/groundtruth/<n>.png) and flat outputs (<map>/<n>_pseudo.png,
    <map>/<n>_pred.png, <map>/<n>.png); row masks are skipped."""
    found: dict[tuple[str, int], Path] = {}
    for map_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        gt_dir = map_dir / ds.GROUNDTRUTH_DIR
        if gt_dir.is_dir():
            files = sorted(gt_dir.glob("*.png"), key=lambda p: p.name)
            for path in files:
                m = _TILE_KEY_RE.match(path.stem)
                if m:
                    found[(map_dir.name, int(m.group(1)))] = path
            continue
        for path in sorted(map_dir.glob("*.png"), key=lambda p: p.name):
            if path.stem.endswith("_rows"):
                continue
            m = _TILE_KEY_RE.match(path.stem)
            if m:
                found[(map_dir.name, int(m.group(1)))] = path
    return found


def _discover_rowmasks(root: Path) -> dict[tuple[str, int], Path]:
    found: dict[tuple[str, int], Path] = {}
    for map_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for path in sorted(map_dir.glob("*_rows.png"), key=lambda p: p.name):
            m = _TILE_KEY_RE.match(path.stem)
            if m:
                found[(map_dir.name, int(m.group(1)))] = path
    return found


def cmd_evaluate(args) -> int:
    config = load_config(args.config)
    pred_root, gt_root = Path(args.pred), Path(args.gt)
    preds = _discover_classmasks(pred_root)
    gts = _discover_classmasks(gt_root)
    if args.maps:
        wanted = set(args.maps.split(","))
        preds = {k: v for k, v in preds.items() if k[0] in wanted}
        gts = {k: v for k, v in gts.items() if k[0] in wanted}
    if not preds:
        raise RoweederError(f"no prediction masks under {pred_root}")
    if set(preds) != set(gts):
        missing = sorted(set(gts) ^ set(preds))[:8]
        raise RoweederError(f"prediction/ground-truth tile sets differ, e.g. {missing}")
    rows = _discover_rowmasks(Path(args.rows)) if args.rows else {}
    if rows and set(preds) - set(rows):
        raise RoweederError("row-mask root does not cover all evaluated tiles")

    dilate = config.rows.thickness_px
    total = empty_confusion()
    total_intra = empty_confusion()
    total_inter = empty_confusion()
    per_tile = []
    for key in sorted(preds):
        pred = read_classmask_png(preds[key])
        gt = read_classmask_png(gts[key])
        cm = confusion(pred, gt)
        total = total.merged(cm)
        entry = {
            "map": key[0],
            "tile": key[1],
            "f1": _f1_block(f1_scores(cm)),
        }
        if rows:
            row_mask = read_binarymask_png(rows[key])
            intra_sel, inter_sel = row_partition_selectors(row_mask, dilate)
            cm_intra = confusion(pred, gt, intra_sel)
            cm_inter = confusion(pred, gt, inter_sel)
            total_intra = total_intra.merged(cm_intra)
            total_inter = total_inter.merged(cm_inter)
            entry["intra_row_f1"] = _f1_block(f1_scores(cm_intra))
            entry["inter_row_f1"] = _f1_block(f1_scores(cm_inter))
        per_tile.append(entry)

    report = {
        "n_tiles": len(per_tile),
        "pixels": total.total,
        "full": _f1_block(f1_scores(total)),
        "confusion": total.counts.tolist(),
        "per_tile": per_tile,
    }
    if rows:
        report["intra_row"] = _f1_block(f1_scores(total_intra))
        report["inter_row"] = _f1_block(f1_scores(total_inter))
        report["row_dilation_px"] = dilate
    _json_dump(report, args.out)
    return 0


# ---------------------------------------------------------------------------
# render
# ---------------------------------------------------------------------------


def cmd_render(args) -> int:
    red = read_channel_raster(args.red)
    green = read_channel_raster(args.green)
    blue = read_channel_raster(args.blue)
    if red.shape != green.shape or red.shape != blue.shape:
        raise RoweederError("channel shapes differ")
    rgb = np.stack(
        [
            np.floor(np.clip(c.values, 0, 1) * 255 + 0.5).astype(np.uint8)
            for c in (red, green, blue)
        ],
        axis=-1,
    )
    if args.mask:
        mask = read_classmask_png(args.mask)
        if mask.shape != red.shape:
            raise RoweederError("class mask shape differs from the channels")
        rgb[mask.labels == 1] = CROP_RGB
        rgb[mask.labels == 2] = WEED_RGB
    if args.rows:
        row_mask = read_binarymask_png(args.rows)
        if row_mask.shape != red.shape:
            raise RoweederError("row mask shape differs from the channels")
        rgb[row_mask.bits] = ROW_RGB
    Image.fromarray(rgb, mode="RGB").save(args.out, format="PNG")
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roweeder",
        description="Crop-row based weed mapping: pseudo-labels and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic fields with exact ground truth")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--maps", type=int, default=5)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--rows", type=int, default=6)
    p.add_argument("--angles", default="0", help="comma list of row angles, cycled over maps")
    p.add_argument("--spacing", type=float, default=36.0)
    p.add_argument("--blob-radius", type=float, default=3.0)
    p.add_argument("--inter-weeds", type=int, default=0)
    p.add_argument("--intra-weeds", type=int, default=0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tile-size", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="inventory and validate a dataset root")
    p.add_argument("--input", required=True)
    p.add_argument("--config")
    p.add_argument("--maps", help="comma list of map ids (default: discover)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("folds", help="build cross-validation folds")
    p.add_argument("--input", required=True)
    p.add_argument("--config")
    p.add_argument("--maps", help="comma list of map ids (default: discover)")
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--include-excluded", action="store_true",
                   help="also fold over maps 005-007")
    p.add_argument("--out")
    p.set_defaults(func=cmd_folds)

    p = sub.add_parser("pseudo-label", help="emit pseudo ground truth for every tile")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--maps", help="comma list of map ids (default: discover)")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_pseudo_label)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--rows", help="root holding <map>/<n>_rows.png for the row split")
    p.add_argument("--maps", help="comma list of map ids to score (default: all)")
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render", help="overlay a class mask on an RGB composite")
    p.add_argument("--red", required=True)
    p.add_argument("--green", required=True)
    p.add_argument("--blue", required=True)
    p.add_argument("--mask")
    p.add_argument("--rows")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (RoweederError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
