"""fieldfuse command line: one subcommand per pipeline stage plus `run`.

Exit codes are stage-tagged: a failure in stage S exits with the code
listed in STAGE_EXIT_CODES[S]. The FIELDFUSE_SEED environment variable
overrides the config seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import aggregation as agg
from . import pipeline as pl
from .synthgen import SynthSpec

STAGE_EXIT_CODES = {
    "config": 10,
    "synth": 11,
    "ingest": 12,
    "features": 13,
    "split": 14,
    "train": 15,
    "predict": 16,
    "aggregate": 17,
    "evaluate": 18,
    "compare": 19,
}


def _load_catalog(labels_dir):
    header = json.loads((Path(labels_dir) / "labels.json").read_text(encoding="utf-8"))
    return list(header["class_catalog"])


def _cmd_synth(args):
    spec = SynthSpec(
        seed=args.seed,
        n_classes=args.classes,
        n_fields=args.fields,
        field_pixels=(args.min_pixels, args.max_pixels),
        sigma=args.sigma,
        grid_size=(args.grid, args.grid),
        resolutions=args.resolutions,
    )
    pl.stage_synth(spec, args.out)
    print(f"wrote scene bundle and fields.geojson under {args.out}")


def _cmd_ingest(args):
    label, kept = pl.stage_ingest(
        args.scene, args.fields, args.out, args.min_pixels, args.exclude
    )
    print(f"retained {len(kept)} fields, {int((label.field_index >= 0).sum())} labeled pixels")


def _cmd_features(args):
    stack = pl.stage_features(args.scene, args.out)
    if args.dump_channel:
        from .features import dump_channel

        dump_channel(stack, args.dump_channel, Path(args.out) / "channels")
    print(f"wrote {len(stack.channels)}-channel stack under {args.out}")


def _cmd_split(args):
    split = pl.stage_split(args.labels, args.out, tuple(args.fractions))
    counts = {name: len(split.fields_of(name)) for name in ("train", "validation", "test")}
    print(f"split fields: {counts}")


def _cmd_train(args):
    classifier = {"kind": args.classifier, "params": json.loads(args.params)}
    balancing = {"scheme": args.balancing, "smote_k": args.smote_k}
    pl.stage_train(
        args.stack,
        args.labels,
        args.split,
        args.out,
        classifier,
        balancing,
        args.seed,
        args.threads,
        args.dump_balanced,
    )
    print(f"wrote model to {Path(args.out) / 'model.npz'}")


def _cmd_predict(args):
    pl.stage_predict(
        args.model, args.stack, args.labels, args.split, args.out, tuple(args.splits), args.threads
    )
    print(f"wrote probability tables for {args.splits} under {args.out}")


def _cmd_aggregate(args):
    if args.labels:
        catalog = _load_catalog(args.labels)
    elif args.classes:
        catalog = [str(k) for k in range(args.classes)]
    else:
        raise pl.StageError("aggregate", "need --labels or --classes for the class catalog")
    preds = pl.stage_aggregate(
        args.probs, catalog, args.out, args.strategy, args.alpha, args.fields, args.geojson
    )
    print(f"aggregated {len(preds)} fields with {args.strategy}")


def _cmd_evaluate(args):
    if args.preds:
        report = pl.stage_evaluate_fields(
            args.preds, args.labels, args.out, args.classifier, args.balancing
        )
    elif args.probs:
        report = pl.stage_evaluate_pixels(
            args.probs, args.labels, args.out, args.classifier, args.balancing
        )
    else:
        raise pl.StageError("evaluate", "need --preds or --probs")
    print(f"OA {report.oa:.2f}%  macro F1 {report.macro_f1:.3f}")


def _cmd_compare(args):
    text = pl.stage_compare(args.reports, args.out)
    print(text, end="")


def _cmd_run(args):
    config = pl.RunConfig.from_json(args.config)
    if args.threads is not None:
        config.threads = args.threads
    reports = pl.run_pipeline(config)
    for r in reports:
        tag = r.level if r.level == "pixel" else f"field/{r.strategy}"
        print(f"{tag:18s} OA {r.oa:6.2f}%  macro F1 {r.macro_f1:.3f}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fieldfuse",
        description="Single-image crop classification with field-level aggregation",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage timings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene bundle + fields")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classes", type=int, default=7)
    p.add_argument("--fields", type=int, default=200)
    p.add_argument("--min-pixels", type=int, default=50)
    p.add_argument("--max-pixels", type=int, default=400)
    p.add_argument("--sigma", type=float, default=100.0)
    p.add_argument("--grid", type=int, default=504)
    p.add_argument("--resolutions", choices=["all10", "sentinel2"], default="all10")
    p.set_defaults(func=_cmd_synth, stage="synth")

    p = sub.add_parser("ingest", help="rasterize and filter fields against a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--fields", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-pixels", type=int, default=None)
    p.add_argument("--exclude", nargs="*", default=None)
    p.set_defaults(func=_cmd_ingest, stage="ingest")

    p = sub.add_parser("features", help="build the 17-channel feature stack")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-channel", default=None, metavar="NAME")
    p.set_defaults(func=_cmd_features, stage="features")

    p = sub.add_parser("split", help="stratified field-wise train/validation/test split")
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fractions", nargs=3, type=float, default=[0.75, 0.125, 0.125])
    p.set_defaults(func=_cmd_split, stage="split")

    p = sub.add_parser("train", help="balance the training split and fit a classifier")
    p.add_argument("--stack", required=True, help="directory holding stack/")
    p.add_argument("--labels", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--classifier", choices=["knn", "rf", "gb"], default="gb")
    p.add_argument("--params", default="{}", help="JSON hyperparameter overrides")
    p.add_argument("--balancing", choices=["none", "ros", "rus", "smote", "weighting"], default="none")
    p.add_argument("--smote-k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--dump-balanced", default=None, metavar="CSV")
    p.set_defaults(func=_cmd_train, stage="train")

    p = sub.add_parser("predict", help="write per-pixel probability tables")
    p.add_argument("--model", required=True)
    p.add_argument("--stack", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--splits", nargs="+", default=["validation", "test"])
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_predict, stage="predict")

    p = sub.add_parser("aggregate", help="fuse pixel probabilities into field decisions")
    p.add_argument("--probs", required=True)
    p.add_argument("--strategy", choices=list(agg.STRATEGIES), required=True)
    p.add_argument("--alpha", type=float, default=agg.DEFAULT_ALPHA)
    p.add_argument("--labels", default=None, help="labels dir for the class catalog")
    p.add_argument("--classes", type=int, default=None, help="class count if no labels dir")
    p.add_argument("--out", required=True)
    p.add_argument("--geojson", default=None, help="also join predictions onto polygons")
    p.add_argument("--fields", default=None, help="field polygons for --geojson")
    p.set_defaults(func=_cmd_aggregate, stage="aggregate")

    p = sub.add_parser("evaluate", help="confusion matrix, OA and macro F1")
    p.add_argument("--preds", default=None, help="field prediction CSV")
    p.add_argument("--probs", default=None, help="pixel probability CSV")
    p.add_argument("--labels", required=True)
    p.add_argument("--classifier", default="")
    p.add_argument("--balancing", default="")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate, stage="evaluate")

    p = sub.add_parser("compare", help="tabulate reports across strategies")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_compare, stage="compare")

    p = sub.add_parser("run", help="execute the full pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=_cmd_run, stage="config")

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(message)s",
        stream=sys.stderr,
    )
    try:
        args.func(args)
    except pl.StageError as exc:
        print(f"[{exc.stage}] {exc}", file=sys.stderr)
        return STAGE_EXIT_CODES.get(exc.stage, 1)
    except Exception as exc:  # argparse handles usage errors before this
        print(f"[{args.stage}] {exc}", file=sys.stderr)
        return STAGE_EXIT_CODES.get(args.stage, 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
