"""Pixel-level learning dataset: assembly, field-wise splitting, balancing.

Fields are split whole into train/validation/test with a greedy
largest-first heuristic that keeps per-class pixel proportions near the
target fractions. Class imbalance is handled by random over-sampling,
random under-sampling, SMOTE, or inverse-frequency class weights.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import FeatureStack
from .ingest import FieldSet, LabelRaster
from .rng import derive_rng

SPLIT_NAMES = ("train", "validation", "test")
DEFAULT_FRACTIONS = (0.75, 0.125, 0.125)
SYNTHETIC_FIELD_ID = "synthetic"

BALANCING_SCHEMES = ("none", "ros", "rus", "smote", "weighting")


class DatasetError(Exception):
    pass


@dataclass(eq=False)
class PixelDataset:
    """Per-pixel rows: feature vector, class index, owning field, coordinates."""

    X: np.ndarray            # (n, n_features)
    y: np.ndarray            # (n,) class indices
    field_ids: np.ndarray    # (n,) str
    rows: np.ndarray         # (n,) pixel row
    cols: np.ndarray         # (n,) pixel col
    class_catalog: list
    smote_provenance: "SmoteProvenance | None" = None

    def __post_init__(self):
        n = len(self.X)
        if not (len(self.y) == len(self.field_ids) == len(self.rows) == len(self.cols) == n):
            raise DatasetError("row arrays disagree in length")
        if n and self.y.max() >= len(self.class_catalog):
            raise DatasetError("class index outside catalog")

    def __len__(self):
        return len(self.X)

    @property
    def n_classes(self):
        return len(self.class_catalog)

    def class_counts(self):
        return np.bincount(self.y, minlength=self.n_classes)


@dataclass(eq=False)
class SmoteProvenance:
    """Seed/neighbor/interpolation record for each synthetic row, in order."""

    seed_idx: np.ndarray
    neighbor_idx: np.ndarray
    lam: np.ndarray


@dataclass(eq=False)
class SplitAssignment:
    """field_id -> split name, plus the achieved per-class pixel fractions."""

    assignment: dict
    fractions: tuple = DEFAULT_FRACTIONS
    achieved: dict = field(default_factory=dict)
    overshoot_classes: list = field(default_factory=list)

    def fields_of(self, split):
        return [fid for fid, s in self.assignment.items() if s == split]

    def save_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["field_id", "split"])
            for fid in sorted(self.assignment):
                writer.writerow([fid, self.assignment[fid]])

    @classmethod
    def load_csv(cls, path, fractions=DEFAULT_FRACTIONS):
        assignment = {}
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                if rec["split"] not in SPLIT_NAMES:
                    raise DatasetError(f"unknown split {rec['split']!r}")
                assignment[rec["field_id"]] = rec["split"]
        return cls(assignment, fractions)


@dataclass
class BalancingSpec:
    """Which balancing scheme to apply to the training split."""

    scheme: str = "none"
    smote_k: int = 5
    seed: int = 0

    def __post_init__(self):
        self.scheme = self.scheme.lower()
        if self.scheme not in BALANCING_SCHEMES:
            raise DatasetError(f"unknown balancing scheme {self.scheme!r}")
        if self.smote_k < 1:
            raise DatasetError("smote_k must be >= 1")


# ---------------------------------------------------------------------------
# Assembly and splitting
# ---------------------------------------------------------------------------

def assemble(stack: FeatureStack, label: LabelRaster, split: SplitAssignment) -> dict:
    """Turn every labeled pixel into one dataset row in its field's split."""
    if stack.shape != label.shape:
        raise DatasetError("stack and label raster dimensions differ")
    labeled = label.field_index >= 0
    rows, cols = np.nonzero(labeled)
    feats = stack.values[:, rows, cols].T
    classes = label.class_index[rows, cols].astype(np.int64)
    fidx = label.field_index[rows, cols]
    field_ids = np.array(label.field_ids, dtype=object)[fidx]

    split_of = np.array(
        [split.assignment.get(fid, "") for fid in label.field_ids], dtype=object
    )
    row_split = split_of[fidx]
    out = {}
    for name in SPLIT_NAMES:
        sel = row_split == name
        out[name] = PixelDataset(
            feats[sel],
            classes[sel],
            field_ids[sel].astype(str),
            rows[sel].astype(np.int32),
            cols[sel].astype(np.int32),
            list(label.class_catalog),
        )
    return out


def greedy_split(field_ids, class_idx, pixel_counts, fractions=DEFAULT_FRACTIONS) -> SplitAssignment:
    """Greedy largest-first assignment of whole fields to splits.

    Per class, fields are taken by descending pixel count (ties by
    field_id) and each goes to the split whose pixel share is furthest
    below its target fraction; ties prefer train, then validation.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise DatasetError("split fractions must be three values summing to 1")
    field_ids = list(field_ids)
    class_idx = np.asarray(class_idx)
    pixel_counts = np.asarray(pixel_counts)
    targets = np.array(fractions)
    assignment = {}
    achieved = {}
    overshoot = []
    for k in np.unique(class_idx):
        members = np.nonzero(class_idx == k)[0]
        if members.size == 0:
            raise DatasetError(f"empty class {k}")
        if members.size < 3:
            warnings.warn(
                f"class {k} has only {members.size} field(s); split targets are unreachable"
            )
        order = sorted(members, key=lambda i: (-pixel_counts[i], field_ids[i]))
        total = max(1, int(pixel_counts[members].sum()))
        assigned = np.zeros(3, dtype=np.float64)
        for i in order:
            deficit = targets - assigned / total
            dest = int(np.argmax(deficit))
            assignment[field_ids[i]] = SPLIT_NAMES[dest]
            assigned[dest] += pixel_counts[i]
        shares = assigned / total
        achieved[int(k)] = tuple(shares)
        if np.abs(shares - targets).max() > 0.05:
            overshoot.append(int(k))
    if overshoot:
        warnings.warn(f"classes {overshoot} deviate more than 5 pp from split targets")
    return SplitAssignment(assignment, fractions, achieved, overshoot)


def stratified_field_split(
    fields: FieldSet, label: LabelRaster, fractions=DEFAULT_FRACTIONS, seed: int = 0
) -> SplitAssignment:
    """Split whole fields while preserving per-class pixel proportions.

    The assignment is fully deterministic (greedy largest-first); ``seed``
    is accepted for interface stability but never consulted.
    """
    del seed
    counts = label.pixel_counts()
    class_idx = np.array([fields.class_index(f.crop_label) for f in fields.fields])
    return greedy_split([f.field_id for f in fields.fields], class_idx, counts, fractions)


# ---------------------------------------------------------------------------
# Balancing
# ---------------------------------------------------------------------------

def balance(train: PixelDataset, spec: BalancingSpec):
    """Apply the requested balancing scheme to the training rows.

    Returns a new PixelDataset for ros/rus/smote/none, or a per-class
    weight vector for the weighting scheme.
    """
    if len(train) == 0:
        raise DatasetError("empty training set")
    if spec.scheme == "none":
        return train
    if spec.scheme == "ros":
        return _random_oversample(train, spec)
    if spec.scheme == "rus":
        return _random_undersample(train, spec)
    if spec.scheme == "smote":
        return _smote(train, spec)
    return class_weights(train)


def class_weights(train: PixelDataset) -> np.ndarray:
    """Inverse-frequency weights: total_rows / (n_classes * count_c).

    Classes absent from the training rows get weight 0.
    """
    counts = train.class_counts()
    weights = np.zeros(train.n_classes, dtype=np.float64)
    present = counts > 0
    weights[present] = len(train) / (train.n_classes * counts[present])
    return weights


def _take(train, idx, field_ids=None, X=None):
    return PixelDataset(
        train.X[idx] if X is None else X,
        train.y[idx],
        train.field_ids[idx] if field_ids is None else field_ids,
        train.rows[idx],
        train.cols[idx],
        list(train.class_catalog),
    )


def _random_oversample(train, spec):
    rng = derive_rng(spec.seed, "ros")
    counts = train.class_counts()
    majority = int(counts.max())
    extras = []
    for k in range(train.n_classes):
        members = np.nonzero(train.y == k)[0]
        deficit = majority - members.size
        if members.size and deficit > 0:
            extras.append(rng.choice(members, size=deficit, replace=True))
    keep = np.arange(len(train))
    idx = np.concatenate([keep] + extras) if extras else keep
    return _take(train, idx)


def _random_undersample(train, spec):
    rng = derive_rng(spec.seed, "rus")
    counts = train.class_counts()
    minority = int(counts[counts > 0].min())
    chosen = []
    for k in range(train.n_classes):
        members = np.nonzero(train.y == k)[0]
        if members.size == 0:
            continue
        if members.size > minority:
            members = np.sort(rng.choice(members, size=minority, replace=False))
        chosen.append(members)
    return _take(train, np.concatenate(chosen))


def _smote(train, spec):
    """Fill minority classes to the majority count with interpolated rows.

    Each synthetic row sits on the segment from a random class member to
    one of its smote_k nearest same-class neighbors (Euclidean); the
    seed/neighbor/lambda provenance is recorded on the result.
    """
    rng = derive_rng(spec.seed, "smote")
    counts = train.class_counts()
    majority = int(counts.max())
    new_X, new_y, seeds, neighbors, lams = [], [], [], [], []
    for k in range(train.n_classes):
        members = np.nonzero(train.y == k)[0]
        deficit = majority - members.size
        if members.size == 0 or deficit <= 0:
            continue
        if members.size == 1:
            warnings.warn(f"class {k} has a single row; SMOTE degenerates to duplication")
            picks = np.repeat(members, deficit)
            new_X.append(train.X[picks])
            new_y.append(np.full(deficit, k, dtype=train.y.dtype))
            seeds.append(picks)
            neighbors.append(picks)
            lams.append(np.zeros(deficit))
            continue
        k_eff = min(spec.smote_k, members.size - 1)
        nn = _same_class_neighbors(train.X[members], k_eff)
        pick = rng.integers(0, members.size, size=deficit)
        which = rng.integers(0, k_eff, size=deficit)
        lam = rng.random(size=deficit)
        seed_rows = members[pick]
        nbr_rows = members[nn[pick, which]]
        x = train.X[seed_rows]
        new_X.append(x + lam[:, None] * (train.X[nbr_rows] - x))
        new_y.append(np.full(deficit, k, dtype=train.y.dtype))
        seeds.append(seed_rows)
        neighbors.append(nbr_rows)
        lams.append(lam)

    if not new_X:
        return train
    X = np.concatenate([train.X] + new_X)
    y = np.concatenate([train.y] + new_y)
    n_new = sum(len(a) for a in new_y)
    # plain np.full would inherit a too-narrow <U dtype and truncate the tag
    field_ids = np.concatenate([train.field_ids, np.full(n_new, SYNTHETIC_FIELD_ID)])
    rows = np.concatenate([train.rows, np.full(n_new, -1, dtype=train.rows.dtype)])
    cols = np.concatenate([train.cols, np.full(n_new, -1, dtype=train.cols.dtype)])
    provenance = SmoteProvenance(
        np.concatenate(seeds), np.concatenate(neighbors), np.concatenate(lams)
    )
    return PixelDataset(X, y, field_ids, rows, cols, list(train.class_catalog), provenance)


def _same_class_neighbors(X, k, chunk=1024):
    """Indices of the k nearest neighbors (self excluded) within one class."""
    n = len(X)
    sq = np.einsum("ij,ij->i", X, X)
    out = np.empty((n, k), dtype=np.int64)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        d2 = sq[lo:hi, None] + sq[None, :] - 2.0 * (X[lo:hi] @ X.T)
        d2[np.arange(lo, hi) - lo, np.arange(lo, hi)] = np.inf
        part = np.argpartition(d2, k - 1, axis=1)[:, :k]
        pd = np.take_along_axis(d2, part, axis=1)
        order = np.argsort(pd, axis=1, kind="stable")
        out[lo:hi] = np.take_along_axis(part, order, axis=1)
    return out


# ---------------------------------------------------------------------------
# Debug dumps
# ---------------------------------------------------------------------------

def dump_dataset_csv(ds: PixelDataset, path) -> None:
    """Balanced-dataset debug dump with provenance columns."""
    prov = ds.smote_provenance
    n_orig = len(ds) - (len(prov.lam) if prov else 0)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        feat_cols = [f"f_{i}" for i in range(ds.X.shape[1])]
        writer.writerow(
            ["row", "col", "field_id", "class"] + feat_cols + ["seed_idx", "neighbor_idx", "lambda"]
        )
        for i in range(len(ds)):
            extra = ["", "", ""]
            if prov is not None and i >= n_orig:
                j = i - n_orig
                extra = [int(prov.seed_idx[j]), int(prov.neighbor_idx[j]), repr(float(prov.lam[j]))]
            writer.writerow(
                [int(ds.rows[i]), int(ds.cols[i]), ds.field_ids[i], int(ds.y[i])]
                + [repr(float(v)) for v in ds.X[i]]
                + extra
            )
