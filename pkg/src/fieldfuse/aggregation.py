"""Field-level aggregation of per-pixel class probabilities.

Three strategies turn a field's pixel probability vectors into one
decision: majority voting over pixel argmaxes, per-class probability
averaging, and Bayesian log-odds fusion. The Bayesian route first shrinks
each pixel vector toward uniform with a smoothing factor alpha, then sums
the per-pixel log-odds

    I(k) = sum_i log((1 - p(k|x_i)) / p(k|x_i))

and decides argmax_k 1/(1 + exp(I(k))), computed as argmin_k I(k) (the
sigmoid is monotonically decreasing in I, so the two forms agree exactly).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_ALPHA = 0.35
DEFAULT_ALPHA_GRID = tuple(round(0.05 * i, 2) for i in range(1, 20))
STRATEGIES = ("majority", "average", "bayesian")


class AggregationError(Exception):
    pass


@dataclass
class SmoothingConfig:
    """Shrinkage of probability vectors toward uniform; alpha in (0, 1).

    Decision-preserving smoothing needs alpha > 1/n_classes; a smaller
    alpha reverses the ranking of probabilities, so it draws a warning.
    """

    alpha: float = DEFAULT_ALPHA
    n_classes: int = 2

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise AggregationError(f"alpha={self.alpha} outside (0, 1)")
        if self.n_classes < 2:
            raise AggregationError("need at least 2 classes")
        if self.alpha <= 1.0 / self.n_classes:
            warnings.warn(
                f"alpha={self.alpha} <= 1/{self.n_classes}: smoothing is not decision-preserving"
            )


@dataclass(eq=False)
class ProbabilityTable:
    """Per-pixel class-probability rows keyed by pixel and field."""

    rows: np.ndarray
    cols: np.ndarray
    field_ids: np.ndarray
    probs: np.ndarray  # (n, n_classes)
    class_catalog: list

    def __post_init__(self):
        if self.probs.ndim != 2 or self.probs.shape[1] != len(self.class_catalog):
            raise AggregationError("probability width does not match catalog")
        if len(self.probs):
            if self.probs.min() < 0:
                raise AggregationError("negative probability")
            sums = self.probs.sum(axis=1)
            if np.abs(sums - 1.0).max() > 1e-6:
                raise AggregationError("probability rows must sum to 1 within 1e-6")

    def __len__(self):
        return len(self.probs)

    def by_field(self):
        """Yield (field_id, probability block) sorted by field_id."""
        order = np.argsort(self.field_ids, kind="stable")
        sorted_ids = self.field_ids[order]
        boundaries = np.nonzero(sorted_ids[1:] != sorted_ids[:-1])[0] + 1
        for block in np.split(order, boundaries):
            # block holds original row indices for one contiguous id group
            yield str(self.field_ids[block[0]]), self.probs[block]


@dataclass
class FieldPrediction:
    field_id: str
    class_index: int
    scores: np.ndarray
    strategy: str
    n_pixels: int


def smooth(probs, cfg: SmoothingConfig):
    """Shrink probability vectors toward uniform: a*p + (1-a)/(N-1)*(1-p).

    Preserves the simplex exactly; the uniform vector is a fixed point.
    """
    probs = np.asarray(probs, dtype=np.float64)
    n = cfg.n_classes
    if probs.shape[-1] != n:
        raise AggregationError("vector width does not match n_classes")
    return cfg.alpha * probs + (1.0 - cfg.alpha) / (n - 1.0) * (1.0 - probs)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def aggregate_majority(probs, field_id="", n_pixels=None) -> FieldPrediction:
    """Most frequent pixel argmax wins; scores are vote fractions."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    if len(probs) == 0:
        raise AggregationError("empty field")
    votes = np.bincount(np.argmax(probs, axis=1), minlength=probs.shape[1])
    scores = votes / votes.sum()
    return FieldPrediction(field_id, int(np.argmax(scores)), scores, "majority", len(probs))


def aggregate_average(probs, field_id="") -> FieldPrediction:
    """Arithmetic mean of the pixel probability vectors; argmax decides."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    if len(probs) == 0:
        raise AggregationError("empty field")
    scores = probs.mean(axis=0)
    return FieldPrediction(field_id, int(np.argmax(scores)), scores, "average", len(probs))


def aggregate_bayesian(probs, cfg: SmoothingConfig, field_id="") -> FieldPrediction:
    """Smooth each pixel vector, sum log-odds, decide by minimal I(k).

    Scores are the fused posteriors 1/(1 + exp(I(k))) evaluated with the
    numerically stable sigmoid branch.
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    if len(probs) == 0:
        raise AggregationError("empty field")
    p_hat = smooth(probs, cfg)
    log_odds = np.log1p(-p_hat) - np.log(p_hat)
    I = log_odds.sum(axis=0)
    if not np.isfinite(I).all():
        raise AggregationError("non-finite log-odds; check smoothing bounds")
    scores = _sigmoid(-I)
    return FieldPrediction(field_id, int(np.argmin(I)), scores, "bayesian", len(probs))


def aggregate_table(table: ProbabilityTable, strategy, cfg=None):
    """Apply one strategy to every field of the table, sorted by field_id."""
    if strategy not in STRATEGIES:
        raise AggregationError(f"unknown strategy {strategy!r}")
    if strategy == "bayesian" and cfg is None:
        cfg = SmoothingConfig(DEFAULT_ALPHA, len(table.class_catalog))
    preds = []
    for field_id, block in table.by_field():
        if strategy == "majority":
            preds.append(aggregate_majority(block, field_id))
        elif strategy == "average":
            preds.append(aggregate_average(block, field_id))
        else:
            preds.append(aggregate_bayesian(block, cfg, field_id))
    return preds


def alpha_accuracy_curve(table: ProbabilityTable, true_class, grid):
    """Field-level Bayesian overall accuracy for each alpha in the grid.

    ``true_class`` maps field_id -> class index.
    """
    accs = []
    for alpha in grid:
        cfg = SmoothingConfig(float(alpha), len(table.class_catalog))
        preds = aggregate_table(table, "bayesian", cfg)
        hits = sum(1 for p in preds if true_class[p.field_id] == p.class_index)
        accs.append(hits / len(preds))
    return np.array(accs)


def grid_search_alpha(table: ProbabilityTable, true_class, grid=DEFAULT_ALPHA_GRID) -> float:
    """Alpha maximizing validation field accuracy; ties take the smaller alpha."""
    grid = [float(a) for a in grid]
    if not grid:
        raise AggregationError("empty alpha grid")
    if len(table) == 0:
        raise AggregationError("empty validation table")
    order = np.argsort(grid, kind="stable")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # small alphas in the grid warn by design
        accs = alpha_accuracy_curve(table, true_class, [grid[i] for i in order])
    return grid[order[int(np.argmax(accs))]]


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def save_probability_table(table: ProbabilityTable, path):
    n = len(table.class_catalog)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "col", "field_id"] + [f"p_{k}" for k in range(n)])
        for i in range(len(table)):
            writer.writerow(
                [int(table.rows[i]), int(table.cols[i]), table.field_ids[i]]
                + [repr(float(v)) for v in table.probs[i]]
            )


def load_probability_table(path, class_catalog) -> ProbabilityTable:
    n = len(class_catalog)
    rows, cols, fids, probs = [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.append(int(rec["row"]))
            cols.append(int(rec["col"]))
            fids.append(rec["field_id"])
            probs.append([float(rec[f"p_{k}"]) for k in range(n)])
    return ProbabilityTable(
        np.array(rows, dtype=np.int32),
        np.array(cols, dtype=np.int32),
        np.array(fids, dtype=object),
        np.array(probs, dtype=np.float64).reshape(len(rows), n),
        list(class_catalog),
    )


def save_field_predictions(preds, path):
    if not preds:
        raise AggregationError("no predictions to save")
    n = len(preds[0].scores)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["field_id", "pred_class"] + [f"score_{k}" for k in range(n)] + ["strategy", "n_pixels"]
        )
        for p in preds:
            writer.writerow(
                [p.field_id, p.class_index]
                + [repr(float(s)) for s in p.scores]
                + [p.strategy, p.n_pixels]
            )


def load_field_predictions(path):
    preds = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            scores = [float(v) for k, v in rec.items() if k.startswith("score_")]
            preds.append(
                FieldPrediction(
                    rec["field_id"],
                    int(rec["pred_class"]),
                    np.array(scores),
                    rec["strategy"],
                    int(rec["n_pixels"]),
                )
            )
    return preds


def predictions_to_geojson(preds, fieldset, path):
    """Join decided classes back onto the field polygons."""
    import json

    by_id = {p.field_id: p for p in preds}
    features = []
    for f in fieldset.fields:
        p = by_id.get(f.field_id)
        if p is None:
            continue
        features.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[[float(x), float(y)] for x, y in ring] for ring in f.rings],
                },
                "properties": {
                    "field_id": f.field_id,
                    "crop": f.crop_label,
                    "pred_class": int(p.class_index),
                    "pred_crop": fieldset.class_catalog[p.class_index]
                    if p.class_index < len(fieldset.class_catalog)
                    else str(p.class_index),
                    "strategy": p.strategy,
                },
            }
        )
    doc = {"type": "FeatureCollection", "features": features}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
