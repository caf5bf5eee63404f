"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .ablate import ablate, default_matrix, write_ablation_tables
from .bands import BAND_SELECTIONS, CATALOG_SIZE, CHANNEL_NAMES
from .dataset import class_stats, load_pairs, save_pairs, select_pair_bands, TilePair
from .errors import DataError, DifdError
from .metrics import CLASS_NAMES
from .raster import read_rstx
from .report import render_report
from .synthetic import SynthSpec, synth_generate
from .tiling import crop_satellite, tile_aerial
from .train import RunConfig, evaluate, make_run_config, train


def cmd_gen_data(args):
    spec = SynthSpec(tile=args.tile, sat_size=args.sat_size,
                     satellite_signal=not args.no_satellite_signal)
    pairs = synth_generate(args.seed, args.n_train + args.n_val, spec=spec)
    save_pairs(args.out, "train", pairs[:args.n_train],
               band_selection="all17", generation=spec.to_dict())
    save_pairs(args.out, "val", pairs[args.n_train:],
               band_selection="all17", generation=spec.to_dict())
    print(f"wrote {args.n_train} train / {args.n_val} val pairs to {args.out}")


def cmd_preprocess(args):
    image = read_rstx(args.aerial)
    label = read_rstx(args.label)
    sat = read_rstx(args.sat)
    if sat.bands != CATALOG_SIZE:
        raise DataError(f"satellite raster has {sat.bands} bands; preprocess "
                        f"expects the {CATALOG_SIZE}-channel catalog")
    parent = args.parent or Path(args.aerial).stem.split(".")[0]
    pairs, skipped = [], 0
    for t in tile_aerial(image, label, tile=args.tile):
        try:
            crop = crop_satellite(sat, t.aerial.bounds(), out_size=args.sat_size)
            pair = TilePair(aerial=t.aerial, satellite=crop, label=t.label,
                            parent=parent, row=t.row, col=t.col,
                            band_names=tuple(CHANNEL_NAMES))
            if args.bands != "all17":
                pair = select_pair_bands(pair, args.bands)
        except DataError:
            skipped += 1
            continue
        pairs.append(pair)
    if not pairs:
        raise DataError("no usable tiles (satellite coverage or size too small)")
    save_pairs(args.out, args.split, pairs, band_selection=args.bands)
    print(f"wrote {len(pairs)} pairs to {args.out} ({skipped} tiles skipped)")


def cmd_stats(args):
    pairs = load_pairs(args.data, args.split)
    stats = class_stats([p.label for p in pairs])
    print(f"{'class':<12}{'pixels':>12}{'frequency':>12}{'weight':>10}")
    for name, c, f, w in zip(CLASS_NAMES, stats.counts, stats.frequencies,
                             stats.weights):
        print(f"{name:<12}{int(c):>12}{f:>12.5f}{w:>10.5f}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class", "pixels", "frequency", "weight"])
            for name, c, f, w in zip(CLASS_NAMES, stats.counts,
                                     stats.frequencies, stats.weights):
                writer.writerow([name, int(c), repr(float(f)), repr(float(w))])
        print(f"wrote {args.out}")


def _run_config_from_args(args) -> RunConfig:
    if args.config:
        cfg = RunConfig.load(args.config)
    else:
        cfg = make_run_config(profile=args.profile, variant=args.variant,
                              bands=args.bands)
    if args.data:
        cfg.data_dir = args.data
    if args.out:
        cfg.out_dir = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    if args.epochs is not None:
        cfg.max_epochs = args.epochs
    if args.max_steps is not None:
        cfg.max_steps = args.max_steps
    if args.batch_size is not None:
        cfg.batch_size = args.batch_size
    if args.run_id:
        cfg.run_id = args.run_id
    return cfg


def cmd_train(args):
    cfg = _run_config_from_args(args)
    record = train(cfg, quiet=args.quiet)
    print(f"run {record.run_id}: stop={record.stop_reason} "
          f"best val mIoU={record.best_miou:.4f} (epoch {record.best_epoch}) "
          f"in {record.wall_time:.1f}s")
    if record.best_checkpoint:
        print(f"checkpoint: {record.best_checkpoint}")


def cmd_eval(args):
    row = evaluate(args.checkpoint, args.data, split=args.split, bands=args.bands)
    for key in ("miou", "mf1", "miou_foreground", "loss"):
        print(f"{key}: {row[key]:.5f}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=sorted(row))
            writer.writeheader()
            writer.writerow(row)
        print(f"wrote {args.out}")


def cmd_ablate(args):
    overrides = {}
    if args.epochs is not None:
        overrides["max_epochs"] = args.epochs
    if args.seed is not None:
        overrides["seed"] = args.seed
    configs = default_matrix(data_dir=args.data, out_dir=args.out,
                             bands=args.bands, **overrides)
    if args.rows:
        wanted = set(args.rows.split(","))
        configs = [c for c in configs if c.run_id in wanted]
    rows = ablate(configs, data_dir=args.data, quiet=args.quiet)
    written = write_ablation_tables(rows, args.out)
    for row in rows:
        t = row.as_table_row()
        print(f"{t['run_id']:<14}{t['inputs']:<10}{t['status']:<10}"
              f"mIoU={t['miou']}")
    print("wrote " + ", ".join(str(p) for p in written))


def cmd_report(args):
    written = render_report(args.runs, args.out)
    print("wrote " + ", ".join(str(p) for p in written))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="difd",
        description="Dual-input fusion segmentation: data, training, and reports.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic paired dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=3407)
    p.add_argument("--n-train", type=int, default=8)
    p.add_argument("--n-val", type=int, default=4)
    p.add_argument("--tile", type=int, default=64)
    p.add_argument("--sat-size", type=int, default=4)
    p.add_argument("--no-satellite-signal", action="store_true")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("preprocess",
                       help="tile + crop + select bands from RSTX parents")
    p.add_argument("--aerial", required=True)
    p.add_argument("--label", required=True)
    p.add_argument("--sat", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--tile", type=int, default=512)
    p.add_argument("--sat-size", type=int, default=26)
    p.add_argument("--bands", default="all17",
                   choices=["all17", *sorted(BAND_SELECTIONS)])
    p.add_argument("--parent", default=None)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("stats", help="class pixel statistics and loss weights")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train one configuration")
    p.add_argument("--data", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None, help="RunConfig JSON path")
    p.add_argument("--profile", default="toy", choices=["toy", "paper"])
    p.add_argument("--variant", default="UpConvT")
    p.add_argument("--bands", default="7B", choices=sorted(BAND_SELECTIONS))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--run-id", default=None)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on one split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="val")
    p.add_argument("--bands", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the design-choice ablation matrix")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bands", default="7B", choices=sorted(BAND_SELECTIONS))
    p.add_argument("--rows", default=None,
                   help="comma-separated run ids to keep from the matrix")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="render markdown + CSV + figure report")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except DifdError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
