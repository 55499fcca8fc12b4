"""End-to-end pipeline: every stage persists its artifacts and can be
re-run on its own, so deleting outputs and re-running any suffix
reproduces identical files.

Stage order: ingest -> features -> split -> train -> predict -> aggregate
-> evaluate -> compare. Only evaluation and the alpha grid search ever see
validation/test labels."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import aggregation as agg
from . import evaluation as ev
from .classifiers import CLASSIFIER_KINDS, load_model, save_model
from .dataset import (
    BalancingSpec,
    SplitAssignment,
    assemble,
    balance,
    class_weights,
    dump_dataset_csv,
    greedy_split,
)
from .features import apply_normalizer, build_feature_stack, fit_normalizer, load_stack, save_stack
from .ingest import (
    LabelRaster,
    filter_fields,
    load_fields,
    load_scene,
    rasterize_fields,
    save_fields,
)
from .synthgen import SynthSpec, generate

LOG = logging.getLogger("fieldfuse")

CONFIG_VERSION = 1
STAGE_ORDER = (
    "synth",
    "ingest",
    "features",
    "split",
    "train",
    "predict",
    "aggregate",
    "evaluate",
    "compare",
)
SEED_ENV_VAR = "FIELDFUSE_SEED"


class StageError(Exception):
    def __init__(self, stage, message):
        super().__init__(message)
        self.stage = stage


@dataclass
class RunConfig:
    scene: str
    fields: str
    out: str
    seed: int = 0
    classifier: dict = field(default_factory=lambda: {"kind": "gb", "params": {}})
    balancing: dict = field(default_factory=lambda: {"scheme": "none"})
    aggregation: dict = field(
        default_factory=lambda: {"strategies": list(agg.STRATEGIES), "alpha": agg.DEFAULT_ALPHA}
    )
    split: dict = field(default_factory=lambda: {"fractions": [0.75, 0.125, 0.125]})
    ingest: dict = field(default_factory=dict)
    threads: int = 1
    version: int = CONFIG_VERSION

    def __post_init__(self):
        if self.version != CONFIG_VERSION:
            raise StageError("config", f"unsupported config version {self.version}")
        fr = self.split.get("fractions", [0.75, 0.125, 0.125])
        if abs(sum(fr) - 1.0) > 1e-9:
            raise StageError("config", "split fractions must sum to 1")
        if self.classifier.get("kind") not in CLASSIFIER_KINDS:
            raise StageError("config", f"unknown classifier {self.classifier.get('kind')!r}")
        if SEED_ENV_VAR in os.environ:
            self.seed = int(os.environ[SEED_ENV_VAR])

    @classmethod
    def from_json(cls, path):
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f for f in cls.__dataclass_fields__}
        extra = set(doc) - known
        if extra:
            raise StageError("config", f"unknown config keys: {sorted(extra)}")
        return cls(**doc)

    def canonical_json(self):
        doc = {k: getattr(self, k) for k in self.__dataclass_fields__}
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def config_hash(self):
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Label raster artifact
# ---------------------------------------------------------------------------

def save_labels(label: LabelRaster, fieldset, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(label.field_index, dtype="<i4").tofile(path / "labels_field.i32")
    np.ascontiguousarray(label.class_index, dtype="<i2").tofile(path / "labels_class.i16")
    counts = label.pixel_counts()
    by_id = {f.field_id: f for f in fieldset.fields}
    header = {
        "height": label.shape[0],
        "width": label.shape[1],
        "class_catalog": list(label.class_catalog),
        "fields": [
            {
                "field_id": fid,
                "crop": by_id[fid].crop_label,
                "class_index": label.class_catalog.index(by_id[fid].crop_label),
                "pixels": int(counts[i]),
            }
            for i, fid in enumerate(label.field_ids)
        ],
        "files": {"field_index": "labels_field.i32", "class_index": "labels_class.i16"},
    }
    (path / "labels.json").write_text(
        json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_labels(path):
    """Returns (LabelRaster, field metadata list from labels.json)."""
    path = Path(path)
    header = json.loads((path / "labels.json").read_text(encoding="utf-8"))
    h, w = header["height"], header["width"]
    fi = np.fromfile(path / header["files"]["field_index"], dtype="<i4").reshape(h, w)
    ci = np.fromfile(path / header["files"]["class_index"], dtype="<i2").reshape(h, w)
    field_ids = [f["field_id"] for f in header["fields"]]
    return (
        LabelRaster(fi, ci, field_ids, list(header["class_catalog"])),
        header["fields"],
    )


def field_truth(field_meta):
    return {f["field_id"]: f["class_index"] for f in field_meta}


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def _timed(stage, fn, *args, **kwargs):
    t0 = time.perf_counter()
    try:
        result = fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, str(exc)) from exc
    LOG.info("stage=%s wall_s=%.3f", stage, time.perf_counter() - t0)
    return result


def stage_synth(spec: SynthSpec, out):
    out = Path(out)
    bundle, fieldset = generate(spec)
    from .ingest import save_scene

    save_scene(bundle, out / "scene")
    save_fields(fieldset, out / "fields.geojson")
    return bundle, fieldset


def stage_ingest(scene_path, fields_path, out, min_pixels=None, excluded=None):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    bundle = load_scene(scene_path)
    fieldset = load_fields(fields_path)
    height, width = bundle.target_shape(10)
    kw = {}
    if min_pixels is not None:
        kw["min_pixels"] = min_pixels
    if excluded is not None:
        kw["excluded"] = excluded
    raw_label = rasterize_fields(fieldset, bundle.geo_transform, height, width)
    kept = filter_fields(fieldset, raw_label, **kw)
    label = rasterize_fields(kept, bundle.geo_transform, height, width)
    save_labels(label, kept, out / "labels")
    save_fields(kept, out / "fields_retained.geojson")
    return label, kept


def stage_features(scene_path, out):
    out = Path(out)
    bundle = load_scene(scene_path)
    stack = build_feature_stack(bundle)
    save_stack(stack, out / "stack")
    return stack


def stage_split(labels_dir, out, fractions=(0.75, 0.125, 0.125)):
    out = Path(out)
    _, field_meta = load_labels(labels_dir)
    split = greedy_split(
        [f["field_id"] for f in field_meta],
        np.array([f["class_index"] for f in field_meta]),
        np.array([f["pixels"] for f in field_meta]),
        fractions,
    )
    split.save_csv(out / "split.csv")
    return split


def _assembled(stack_dir, labels_dir, split_csv):
    stack = load_stack(Path(stack_dir) / "stack")
    label, field_meta = load_labels(labels_dir)
    split = SplitAssignment.load_csv(split_csv)
    return stack, label, field_meta, split


def stage_train(
    stack_dir,
    labels_dir,
    split_csv,
    out,
    classifier=None,
    balancing=None,
    seed=0,
    threads=1,
    dump_balanced=None,
):
    out = Path(out)
    classifier = classifier or {"kind": "gb", "params": {}}
    balancing = balancing or {"scheme": "none"}
    stack, label, _, split = _assembled(stack_dir, labels_dir, split_csv)

    train_fields = set(split.fields_of("train"))
    fid_grid = label.field_index
    train_field_pos = [i for i, fid in enumerate(label.field_ids) if fid in train_fields]
    train_mask = np.isin(fid_grid, np.array(train_field_pos, dtype=fid_grid.dtype))
    normalizer = fit_normalizer(stack, train_mask)
    stack = apply_normalizer(normalizer, stack)

    parts = assemble(stack, label, split)
    train = parts["train"]
    spec = BalancingSpec(seed=seed, **balancing)
    sample_weight = None
    if spec.scheme == "weighting":
        weights = balance(train, spec)
        sample_weight = weights[train.y]
    else:
        train = balance(train, spec)
        if dump_balanced:
            dump_dataset_csv(train, dump_balanced)

    kind = classifier["kind"]
    params = dict(classifier.get("params", {}))
    if kind != "knn":
        params.setdefault("seed", seed)
    model = CLASSIFIER_KINDS[kind](**params)
    if kind == "knn":
        model.fit(train.X, train.y, n_classes=train.n_classes)
    else:
        model.fit(
            train.X,
            train.y,
            n_classes=train.n_classes,
            sample_weight=sample_weight,
            threads=threads,
        )
    save_model(out / "model.npz", model, train.class_catalog, normalizer)
    return model, normalizer


def stage_predict(model_path, stack_dir, labels_dir, split_csv, out, splits=("validation", "test"), threads=1):
    out = Path(out)
    model, catalog, normalizer = load_model(model_path)
    stack, label, _, split = _assembled(stack_dir, labels_dir, split_csv)
    if normalizer is not None:
        stack = apply_normalizer(normalizer, stack)
    parts = assemble(stack, label, split)
    tables = {}
    for name in splits:
        ds = parts[name]
        if len(ds) == 0:
            raise StageError("predict", f"no pixels in split {name!r}")
        if isinstance(model, CLASSIFIER_KINDS["knn"]):
            probs = model.predict_proba(ds.X)
        else:
            probs = model.predict_proba(ds.X, threads=threads)
        table = agg.ProbabilityTable(ds.rows, ds.cols, ds.field_ids, probs, catalog)
        agg.save_probability_table(table, out / f"probs_{name}.csv")
        tables[name] = table
    return tables


def stage_aggregate(
    probs_csv, class_catalog, out_csv, strategy, alpha=agg.DEFAULT_ALPHA, fields_geojson=None, out_geojson=None
):
    table = agg.load_probability_table(probs_csv, class_catalog)
    cfg = None
    if strategy == "bayesian":
        cfg = agg.SmoothingConfig(alpha, len(class_catalog))
    preds = agg.aggregate_table(table, strategy, cfg)
    agg.save_field_predictions(preds, out_csv)
    if out_geojson is not None:
        if fields_geojson is None:
            raise StageError("aggregate", "GeoJSON output needs --fields polygons to join onto")
        agg.predictions_to_geojson(preds, load_fields(fields_geojson), out_geojson)
    return preds


def _write_report(report, out_json):
    out_json = Path(out_json)
    ev.save_report(report, out_json)
    ev.report_to_csv(report, out_json.with_suffix(".csv"))
    out_json.with_suffix(".txt").write_text(ev.format_report(report), encoding="utf-8")


def stage_evaluate_pixels(probs_csv, labels_dir, out_json, classifier="", balancing=""):
    label, field_meta = load_labels(labels_dir)
    catalog = label.class_catalog
    table = agg.load_probability_table(probs_csv, catalog)
    y_true = label.class_index[table.rows, table.cols]
    y_pred = np.argmax(table.probs, axis=1)
    report = ev.metrics(
        ev.confusion(y_true, y_pred, len(catalog), level="pixel"),
        balancing=balancing,
        classifier=classifier,
    )
    _write_report(report, out_json)
    return report


def stage_evaluate_fields(preds_csv, labels_dir, out_json, classifier="", balancing=""):
    label, field_meta = load_labels(labels_dir)
    preds = agg.load_field_predictions(preds_csv)
    truth = field_truth(field_meta)
    y_true = [truth[p.field_id] for p in preds]
    y_pred = [p.class_index for p in preds]
    strategy = preds[0].strategy if preds else ""
    report = ev.metrics(
        ev.confusion(y_true, y_pred, len(label.class_catalog), level="field"),
        strategy=strategy,
        balancing=balancing,
        classifier=classifier,
    )
    _write_report(report, out_json)
    return report


def stage_compare(report_paths, out_txt):
    reports = [ev.load_report(p) for p in report_paths]
    text = ev.compare_strategies(reports)
    Path(out_txt).write_text(text, encoding="utf-8")
    return text


# ---------------------------------------------------------------------------
# Full run
# ---------------------------------------------------------------------------

def run_pipeline(config: RunConfig):
    """Execute every stage; returns the collected EvalReports."""
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    LOG.info("run start seed=%d config_hash=%s", config.seed, config.config_hash())

    _timed(
        "ingest",
        stage_ingest,
        config.scene,
        config.fields,
        out,
        config.ingest.get("min_pixels"),
        config.ingest.get("excluded"),
    )
    _timed("features", stage_features, config.scene, out)
    _timed("split", stage_split, out / "labels", out, tuple(config.split["fractions"]))
    _timed(
        "train",
        stage_train,
        out,
        out / "labels",
        out / "split.csv",
        out,
        config.classifier,
        config.balancing,
        config.seed,
        config.threads,
    )
    tables = _timed(
        "predict",
        stage_predict,
        out / "model.npz",
        out,
        out / "labels",
        out / "split.csv",
        out,
        ("validation", "test"),
        config.threads,
    )
    catalog = tables["test"].class_catalog

    alpha_setting = config.aggregation.get("alpha", agg.DEFAULT_ALPHA)
    if alpha_setting == "grid":
        _, field_meta = load_labels(out / "labels")
        grid = config.aggregation.get("grid", agg.DEFAULT_ALPHA_GRID)
        alpha = _timed(
            "aggregate",
            agg.grid_search_alpha,
            tables["validation"],
            field_truth(field_meta),
            grid,
        )
        LOG.info("grid search selected alpha=%.3f", alpha)
    else:
        alpha = float(alpha_setting)

    clf = config.classifier["kind"]
    bal = config.balancing.get("scheme", "none")
    reports = []
    strategies = config.aggregation.get("strategies", list(agg.STRATEGIES))
    for strategy in strategies:
        preds_csv = out / f"preds_{strategy}.csv"
        _timed("aggregate", stage_aggregate, out / "probs_test.csv", catalog, preds_csv, strategy, alpha)
        report = _timed(
            "evaluate",
            stage_evaluate_fields,
            preds_csv,
            out / "labels",
            out / f"report_field_{strategy}.json",
            clf,
            bal,
        )
        reports.append(report)
    pixel_report = _timed(
        "evaluate",
        stage_evaluate_pixels,
        out / "probs_test.csv",
        out / "labels",
        out / "report_pixel.json",
        clf,
        bal,
    )
    reports.append(pixel_report)

    report_paths = [out / f"report_field_{s}.json" for s in strategies] + [out / "report_pixel.json"]
    _timed("compare", stage_compare, report_paths, out / "comparison.txt")

    summary = {
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "alpha": alpha,
        "classifier": clf,
        "balancing": bal,
        "reports": {
            r.level if r.level == "pixel" else f"field_{r.strategy}": {
                "oa": r.oa,
                "macro_f1": r.macro_f1,
            }
            for r in reports
        },
    }
    (out / "run_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return reports
