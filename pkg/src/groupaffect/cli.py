"""Command-line entry point: ``groupaffect <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import heatmap, imageproc
from .baselines import ForestSpec, feature_matrix, rf_train
from .dataset import SplitSpec, load_manifest, save_manifest, stratified_split, synth_generate
from .emotion import LABELS
from .harness import (
    averaging_predictor,
    compare_table,
    evaluate,
    forest_predictor,
    load_config,
    load_report,
    run_experiment,
)


def _size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None


def _range(text: str) -> tuple[int, int]:
    try:
        lo, hi = text.split("..")
        return int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected MIN..MAX, got {text!r}") from None


def _format_confusion(cm: np.ndarray) -> str:
    width = max(len(l) for l in LABELS) + 2
    lines = ["true \\ pred".ljust(width) + "".join(l.rjust(width) for l in LABELS)]
    for label, row in zip(LABELS, cm):
        lines.append(label.ljust(width) + "".join(str(v).rjust(width) for v in row))
    return "\n".join(lines)


def _print_eval(name: str, acc: float, cm: np.ndarray, as_json: bool) -> None:
    if as_json:
        print(json.dumps({"set": name, "accuracy": acc, "confusion": cm.tolist(), "labels": list(LABELS)}))
        return
    print(f"{name}: accuracy {100 * acc:.2f}% ({int(np.trace(cm))}/{int(cm.sum())})")
    print(_format_confusion(cm))


def cmd_dataset_gen(args) -> int:
    m = synth_generate(args.per_class, args.size, args.faces, args.seed)
    save_manifest(m, args.out)
    print(f"wrote {len(m)} records to {args.out}")
    return 0


def cmd_dataset_split(args) -> int:
    m = load_manifest(args.input)
    train, holdout = stratified_split(m, SplitSpec(args.holdout, args.seed))
    save_manifest(train, args.out_train)
    save_manifest(holdout, args.out_holdout)
    print(f"train {len(train)} {train.class_counts}; hold-out {len(holdout)} {holdout.class_counts}")
    return 0


def cmd_heatmap_render(args) -> int:
    m = load_manifest(args.manifest)
    out = Path(args.out_dir)
    kind = heatmap.KernelKind(args.kernel)
    for r in m.records:
        t = heatmap.record_heatmap(r, kind)
        heatmap.write_tensor(t, out / f"{r.id}.hmap")
        if args.png:
            heatmap.export_png(t, out / f"{r.id}.png")
    print(f"rendered {len(m)} heatmaps into {out}")
    return 0


def cmd_augment_preview(args) -> int:
    t = heatmap.read_tensor(args.input)
    p = imageproc.sample_augment(np.random.default_rng(args.seed), args.rotation_range)
    heatmap.export_png(imageproc.apply_augment(t, p), args.out)
    print(json.dumps(p.__dict__))
    return 0


def cmd_baseline_avg(args) -> int:
    m = load_manifest(args.manifest)
    acc, cm = evaluate(averaging_predictor(args.fallback), m)
    _print_eval("averaging", acc, cm, args.json)
    return 0


def cmd_baseline_rf(args) -> int:
    train = load_manifest(args.train)
    x, y, _ = feature_matrix(train.records)
    forest = rf_train(x, y, ForestSpec(n_trees=args.trees, max_depth=args.max_depth, seed=args.seed))
    majority = int(np.bincount(y, minlength=len(LABELS)).argmax())
    predictor = forest_predictor(forest, majority)
    acc, cm = evaluate(predictor, train)
    _print_eval("train", acc, cm, args.json)
    if args.eval:
        acc, cm = evaluate(predictor, load_manifest(args.eval))
        _print_eval("eval", acc, cm, args.json)
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    report = run_experiment(cfg, deterministic=args.deterministic)
    print(compare_table([report]), end="")
    if cfg.out_dir:
        print(f"report written to {Path(cfg.out_dir) / 'report.json'}")
    return 0


def cmd_compare(args) -> int:
    paths = sorted(Path(args.reports).rglob("report.json"))
    if not paths:
        print(f"no report.json files under {args.reports}", file=sys.stderr)
        return 1
    print(compare_table([load_report(p) for p in paths]), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groupaffect", description="Group affect heatmap pipeline")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    ds = sub.add_parser("dataset", help="generate or split manifests").add_subparsers(dest="action", required=True)
    gen = ds.add_parser("gen", help="generate a synthetic manifest")
    gen.add_argument("--per-class", type=int, required=True)
    gen.add_argument("--size", type=_size, required=True, help="WxH")
    gen.add_argument("--faces", type=_range, required=True, help="MIN..MAX")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_dataset_gen)

    split = ds.add_parser("split", help="stratified train/hold-out split")
    split.add_argument("--holdout", type=float, default=0.10)
    split.add_argument("--seed", type=int, default=0)
    split.add_argument("--in", dest="input", required=True)
    split.add_argument("--out-train", required=True)
    split.add_argument("--out-holdout", required=True)
    split.set_defaults(func=cmd_dataset_split)

    hm = sub.add_parser("heatmap", help="render heatmaps").add_subparsers(dest="action", required=True)
    render = hm.add_parser("render")
    render.add_argument("--manifest", required=True)
    render.add_argument("--kernel", choices=[k.value for k in heatmap.KernelKind], required=True)
    render.add_argument("--out-dir", required=True)
    render.add_argument("--png", action="store_true")
    render.set_defaults(func=cmd_heatmap_render)

    aug = sub.add_parser("augment", help="augmentation tools").add_subparsers(dest="action", required=True)
    preview = aug.add_parser("preview")
    preview.add_argument("--in", dest="input", required=True, help="HMAP1 tensor file")
    preview.add_argument("--seed", type=int, default=0)
    preview.add_argument("--rotation-range", type=float, default=imageproc.ROTATION_RANGE)
    preview.add_argument("--out", required=True)
    preview.set_defaults(func=cmd_augment_preview)

    bl = sub.add_parser("baseline", help="non-neural baselines").add_subparsers(dest="action", required=True)
    avg = bl.add_parser("avg")
    avg.add_argument("--manifest", required=True)
    avg.add_argument("--fallback", choices=LABELS, default="Positive")
    avg.add_argument("--json", action="store_true", help="machine-readable rows")
    avg.set_defaults(func=cmd_baseline_avg)
    rf = bl.add_parser("rf")
    rf.add_argument("--train", required=True)
    rf.add_argument("--eval")
    rf.add_argument("--trees", type=int, default=15)
    rf.add_argument("--max-depth", type=int)
    rf.add_argument("--seed", type=int, default=0)
    rf.add_argument("--json", action="store_true", help="machine-readable rows")
    rf.set_defaults(func=cmd_baseline_rf)

    run = sub.add_parser("run", help="run one experiment from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--deterministic", action="store_true")
    run.set_defaults(func=cmd_run)

    cmp_ = sub.add_parser("compare", help="tabulate report.json files beside the published numbers")
    cmp_.add_argument("--reports", required=True)
    cmp_.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
