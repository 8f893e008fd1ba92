"""Command-line entry point wiring the toolkit into runnable pipelines.

Subcommands:

* ``gen-synth``  - generate a synthetic label-map dataset
* ``stats``      - class-frequency statistics and Gini coefficients
* ``sample-lt``  - carve a long-tailed subset out of a dataset
* ``split``      - frequent/common/rare class partition from a stats file
* ``eval``       - dual-metric mIoU evaluation of predictions
* ``match``      - one-to-one or frequency-based query matching

All reports are JSON written atomically; ``--pretty`` additionally prints a
human-readable summary. Exit codes: 0 success, 2 usage error, 3 data error,
4 unreachable sampling target.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    index_to_cache_dict,
    load_label_map,
    load_manifest,
    rebase_paths,
    subset,
    write_manifest,
)
from .errors import DataError, LtsegError, UnreachableTargetError
from .evaluation import evaluate
from .ioutil import write_json_atomic
from .matching import MatchProblem, match_frequency_based, match_one_to_one
from .sampler import SamplerConfig, sample_lt
from .stats import ClassStats, compute_stats, split_classes
from .synth import SyntheticProfile, generate_synthetic

log = logging.getLogger("ltseg")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_SAMPLER = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ltseg",
        description="Long-tailed semantic segmentation toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for raster scanning / evaluation (default 1)")
    parser.add_argument("--log-level", default="warning",
                        choices=["debug", "info", "warning", "error"])
    parser.add_argument("--pretty", action="store_true",
                        help="also print a human-readable summary to stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a synthetic dataset")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--images", type=int, required=True)
    p.add_argument("--rank-decay", type=float, default=0.0)
    p.add_argument("--size", type=int, default=64, help="square image side in pixels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("stats", help="class weights and Gini coefficients")
    p.add_argument("--manifest", required=True, help="manifest or index-cache JSON")
    p.add_argument("--out", required=True, help="stats JSON output path")
    p.add_argument("--emit-index", help="also write the scanned index cache here")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("sample-lt", help="greedy long-tailed subset sampling")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", choices=["image", "pixel"], default="image")
    p.add_argument("--target-gini", type=float, required=True)
    p.add_argument("--max-eliminated", type=int, default=None,
                   help="elimination budget (default: 70%% of the dataset)")
    p.add_argument("--out-manifest", required=True)
    p.add_argument("--report", required=True, help="sampling report JSON path")
    p.set_defaults(func=cmd_sample_lt)

    p = sub.add_parser("split", help="frequent/common/rare class partition")
    p.add_argument("--stats", required=True, help="stats JSON produced by the stats command")
    p.add_argument("--mode", choices=["image", "pixel"], required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("eval", help="dual-metric mIoU evaluation")
    p.add_argument("--gt-manifest", required=True)
    p.add_argument("--pred-dir", required=True,
                   help="directory holding <image_id>.png predictions")
    p.add_argument("--train-stats", required=True,
                   help="stats JSON of the training set (defines the splits)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("match", help="query-to-target matching")
    p.add_argument("--cost", required=True, help="CSV cost matrix, queries x targets")
    p.add_argument("--classes", required=True, help="CSV of one class id per target")
    p.add_argument("--freq", required=True, help="stats JSON giving class frequencies")
    p.add_argument("--t", type=float, default=0.0006, help="frequency threshold")
    p.add_argument("--s", type=float, default=2.0, help="matching intensity")
    p.add_argument("--one-to-one", action="store_true",
                   help="plain Hungarian matching instead of frequency-based")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_match)

    return parser


def cmd_gen_synth(args) -> int:
    profile = SyntheticProfile(
        num_classes=args.classes,
        num_images=args.images,
        rank_decay=args.rank_decay,
        image_size=args.size,
        seed=args.seed,
    )
    index = generate_synthetic(profile, args.out)
    log.info("wrote %d rasters under %s", index.num_images, args.out)
    if args.pretty:
        print(f"generated {index.num_images} images, {index.num_classes} classes -> {args.out}")
    return EXIT_OK


def cmd_stats(args) -> int:
    index = load_manifest(args.manifest, threads=args.threads)
    stats = compute_stats(index)
    write_json_atomic(args.out, stats.to_dict())
    if args.emit_index:
        rebased = rebase_paths(index, Path(args.manifest).parent, Path(args.emit_index).parent)
        write_json_atomic(args.emit_index, index_to_cache_dict(rebased))
    if args.pretty:
        print(f"dataset {index.name}: {index.num_images} images, {index.num_classes} classes")
        print(f"  image-level gini: {stats.gini_image:.4f}")
        print(f"  pixel-level gini: {stats.gini_pixel:.4f}")
    return EXIT_OK


def cmd_sample_lt(args) -> int:
    index = load_manifest(args.manifest, threads=args.threads)
    config = SamplerConfig(
        target_gini=args.target_gini,
        mode=args.mode,
        max_eliminated=args.max_eliminated,
    )
    report = sample_lt(index, config)
    kept = rebase_paths(
        subset(index, report.kept_ids),
        Path(args.manifest).parent,
        Path(args.out_manifest).parent,
    )
    write_manifest(kept, args.out_manifest)
    write_json_atomic(args.report, report.to_dict())
    if args.pretty:
        print(f"kept {len(report.kept_ids)}/{index.num_images} images "
              f"({report.eliminated_count} eliminated, {report.stop_reason})")
        print(f"  achieved gini: image {report.achieved_gini_image:.4f}, "
              f"pixel {report.achieved_gini_pixel:.4f}")
    return EXIT_OK


def cmd_split(args) -> int:
    stats = _load_stats(args.stats)
    split = split_classes(stats, args.mode)
    write_json_atomic(args.out, split.to_dict())
    if args.pretty:
        d = split.to_dict()
        print(f"{args.mode}-level split: {len(d['frequent'])} frequent, "
              f"{len(d['common'])} common, {len(d['rare'])} rare")
    return EXIT_OK


def cmd_eval(args) -> int:
    gt_index = load_manifest(args.gt_manifest, threads=args.threads)
    train_stats = _load_stats(args.train_stats)
    pred_dir = Path(args.pred_dir)

    def lookup(image_id: str):
        path = pred_dir / f"{image_id}.png"
        if not path.exists():
            raise DataError(f"no prediction raster for image {image_id!r} under {pred_dir}")
        return load_label_map(path, gt_index.ignore_id)

    report = evaluate(
        gt_index, lookup, train_stats,
        threads=args.threads, gt_root=str(Path(args.gt_manifest).parent),
    )
    write_json_atomic(args.out, report.to_dict())
    if args.pretty:
        print(f"mIoU: {report.miou:.4f}")
        for mode, entry in (("image", report.image_level), ("pixel", report.pixel_level)):
            cells = ", ".join(
                f"{k[5:]}={v:.4f}" if v is not None else f"{k[5:]}=n/a"
                for k, v in entry.items()
            )
            print(f"  {mode}-level: {cells}")
    return EXIT_OK


def cmd_match(args) -> int:
    cost = _read_cost_csv(args.cost)
    classes = _read_int_csv(args.classes)
    stats = _load_stats(args.freq)
    if stats.num_images < 1:
        raise DataError("stats file reports no images")
    freqs = {}
    for c in classes:
        if not (0 <= c < stats.num_classes):
            raise DataError(f"target class {c} out of range (C={stats.num_classes})")
        freqs[c] = float(stats.image_weights[c]) / stats.num_images

    problem = MatchProblem(cost, tuple(classes), freqs, t=args.t, s=args.s)
    result = match_one_to_one(problem) if args.one_to_one else match_frequency_based(problem)
    write_json_atomic(args.out, result.to_dict())
    if args.pretty:
        matched = sum(1 for t in result.query_to_target if t is not None)
        print(f"matched {matched}/{len(result.query_to_target)} queries, "
              f"total cost {result.total_cost:.6f}"
              + (" (slot counts clamped)" if result.clamped else ""))
    return EXIT_OK


def _load_stats(path: str) -> ClassStats:
    import json

    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed JSON in {path}: {exc}") from None
    return ClassStats.from_dict(data)


def _read_cost_csv(path: str) -> np.ndarray:
    rows = []
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            for line in csv.reader(fh):
                if not line:
                    continue
                try:
                    rows.append([float(x) for x in line])
                except ValueError as exc:
                    raise DataError(f"{path}: non-numeric cost entry: {exc}") from None
    except FileNotFoundError:
        raise DataError(f"file not found: {path}") from None
    if not rows:
        raise DataError(f"{path}: empty cost matrix")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise DataError(f"{path}: ragged cost matrix")
    return np.asarray(rows, dtype=np.float64)


def _read_int_csv(path: str) -> list[int]:
    values = []
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            for line in csv.reader(fh):
                for cell in line:
                    cell = cell.strip()
                    if cell:
                        try:
                            values.append(int(cell))
                        except ValueError:
                            raise DataError(f"{path}: non-integer class id {cell!r}") from None
    except FileNotFoundError:
        raise DataError(f"file not found: {path}") from None
    if not values:
        raise DataError(f"{path}: no class ids")
    return values


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper()),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except UnreachableTargetError as exc:
        print(f"error: unreachable-target: {exc}", file=sys.stderr)
        return EXIT_SAMPLER
    except LtsegError as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
