"""Command-line harness.

Subcommands: prepare, train, eval, roc, meta, sweep-blocks. Flags mirror
the experiment config fields and override values read with --config.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields, replace
from pathlib import Path

from . import fixture, harness
from .harness import ExperimentConfig, emit_report, parse_config_file


def _add_config_flags(parser):
    parser.add_argument("--config", help="flat key = value config file")
    for f in fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        kind = type(f.default)
        parser.add_argument(flag, dest=f.name, type=kind, default=None, help=f"override {f.name}")


def _resolve_config(args):
    cfg = parse_config_file(args.config) if args.config else ExperimentConfig()
    overrides = {
        f.name: getattr(args, f.name)
        for f in fields(ExperimentConfig)
        if getattr(args, f.name, None) is not None
    }
    return replace(cfg, **overrides)


def _print_report(report):
    print(f"overall_rate {harness.format_value(report.overall_rate)}")
    print(f"n_test {report.n_test}")
    print(f"n_correct {report.n_correct}")
    if report.auc is not None:
        print(f"auc {harness.format_value(report.auc)}")
    for key in sorted(report.extras):
        print(f"{key} {harness.format_value(report.extras[key])}")
    for stage, secs in report.timings.items():
        print(f"time_{stage} {secs:.2f}s")


def build_parser():
    parser = argparse.ArgumentParser(prog="sparseface")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="generate the synthetic fixture or validate a dataset")
    p.add_argument("--out", help="directory to write the fixture dataset into")
    p.add_argument("--validate", help="dataset root to check instead of generating")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=25)
    p.add_argument("--fixture-height", type=int, default=32)
    p.add_argument("--fixture-width", type=int, default=28)
    p.add_argument("--fixture-seed", type=int, default=0)

    p = sub.add_parser("train", help="train offline artifacts into a cache file")
    _add_config_flags(p)
    p.add_argument("--cache", required=True, help="output model file")

    p = sub.add_parser("eval", help="evaluate the configured pipeline")
    _add_config_flags(p)
    p.add_argument("--out", required=True, help="directory for CSV reports")
    p.add_argument("--cache", help="optional model file written by `train`")

    p = sub.add_parser("roc", help="outlier rejection experiment")
    _add_config_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("meta", help="meta-classifier train + eval")
    _add_config_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep-blocks", help="recognition rate versus block count")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    return parser


def cmd_prepare(args):
    if args.validate:
        cfg = ExperimentConfig(dataset_root=args.validate, height=0, width=0, train_per_class=1)
        train, test = harness.split_dataset(args.validate, cfg)
        total = len(train.images) + len(test.images)
        print(f"dataset ok: {train.k_classes} classes, {total} samples, "
              f"{train.images[0].height}x{train.images[0].width}")
        return 0
    if not args.out:
        raise ValueError("prepare needs --out or --validate")
    fixture.generate_dataset(
        args.out,
        n_classes=args.classes,
        per_class=args.per_class,
        height=args.fixture_height,
        width=args.fixture_width,
        seed=args.fixture_seed,
    )
    print(f"fixture written to {args.out}: {args.classes} classes x {args.per_class} samples")
    return 0


def cmd_train(args):
    cfg = _resolve_config(args)
    train_set, _ = harness.split_dataset(cfg.dataset_root, cfg)
    model = harness.train_pipeline(train_set, cfg)
    Path(args.cache).parent.mkdir(parents=True, exist_ok=True)
    harness.save_pipeline(model, cfg, args.cache)
    print(f"model cached at {args.cache}")
    return 0


def cmd_eval(args):
    cfg = _resolve_config(args)
    if args.cache and Path(args.cache).exists() and cfg.pipeline != "meta":
        train_set, test_set = harness.split_dataset(cfg.dataset_root, cfg)
        model = harness.load_pipeline(args.cache)
        test_images = harness.distort_all(test_set.images, cfg)
        preds = [harness.pipeline_scores(model, img, cfg).decision for img in test_images]
        report = harness.compute_metrics(
            test_set.labels, preds, train_set.k_classes, test_set.class_ids
        )
    else:
        report = harness.run_pipeline(cfg)
    emit_report(report, args.out, cfg)
    _print_report(report)
    return 0


def cmd_roc(args):
    cfg = _resolve_config(args)
    report = harness.run_roc(cfg)
    emit_report(report, args.out, cfg)
    _print_report(report)
    return 0


def cmd_meta(args):
    cfg = replace(_resolve_config(args), pipeline="meta")
    report = harness.run_meta(cfg)
    emit_report(report, args.out, cfg)
    _print_report(report)
    return 0


def cmd_sweep(args):
    cfg = _resolve_config(args)
    results = harness.run_sweep(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "sweep.csv", "w", newline="") as fh:
        fh.write("blocks,overall_rate\n")
        for count, report in results:
            fh.write(f"{count},{harness.format_value(report.overall_rate)}\n")
    (out_dir / "config.echo").write_text(harness.config_echo(cfg))
    for count, report in results:
        print(f"blocks {count}: rate {harness.format_value(report.overall_rate)}")
    return 0


_COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "eval": cmd_eval,
    "roc": cmd_roc,
    "meta": cmd_meta,
    "sweep-blocks": cmd_sweep,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # surface one diagnostic line, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
