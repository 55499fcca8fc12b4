"""
The three pixel classifiers
===========================

Distance-weighted KNN, a random forest of Gini trees, and multiclass
gradient boosting with a softmax link, all from the same normalized
feature rows and all emitting class-probability vectors.
"""

import time
import warnings

import numpy as np

from fieldfuse import (
    GradientBoosting,
    KnnClassifier,
    RandomForest,
    SynthSpec,
    apply_normalizer,
    build_feature_stack,
    fit_normalizer,
    generate,
    stratified_field_split,
)
from fieldfuse.dataset import assemble
from fieldfuse.ingest import rasterize_fields

from fieldfuse.rng import derive_rng
from fieldfuse.synthgen import N_BANDS

# class means drawn close together + per-field offsets: hard enough that
# the classifiers have to disagree on some pixels
means = derive_rng(31, "demo-means").uniform(1800, 3200, size=(4, N_BANDS))
spec = SynthSpec(
    seed=31, n_classes=4, n_fields=48, field_pixels=(50, 120), grid_size=(208, 208),
    sigma=450.0, field_sigma=300.0, band_means=means,
)
bundle, fields = generate(spec)
h, w = bundle.target_shape(10)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    label = rasterize_fields(fields, bundle.geo_transform, h, w)
    split = stratified_field_split(fields, label)
stack = build_feature_stack(bundle)
train_fields = set(split.fields_of("train"))
pos = [i for i, f in enumerate(label.field_ids) if f in train_fields]
norm = fit_normalizer(stack, np.isin(label.field_index, np.array(pos)))
stack = apply_normalizer(norm, stack)
parts = assemble(stack, label, split)
tr, te = parts["train"], parts["test"]
print(f"train {len(tr)} rows, test {len(te)} rows, {tr.n_classes} classes\n")

# hyperparameter defaults follow the reference configuration
# (KNN k=8; RF 200 trees depth 15; GB 250 rounds depth 10); the smaller
# settings here just keep the demo quick
models = {
    "knn": KnnClassifier(k=8),
    "rf": RandomForest(n_trees=40, max_depth=12, min_samples_leaf=10, seed=0),
    "gb": GradientBoosting(n_rounds=25, max_depth=5, learning_rate=0.2, seed=0),
}
for name, model in models.items():
    t0 = time.perf_counter()
    model.fit(tr.X, tr.y, n_classes=tr.n_classes)
    fit_s = time.perf_counter() - t0
    probs = model.predict_proba(te.X)
    acc = np.mean(probs.argmax(axis=1) == te.y)
    worst_sum = np.abs(probs.sum(axis=1) - 1).max()
    print(f"{name:4s} fit {fit_s:5.1f}s  test pixel OA {acc:.3f}  "
          f"max |row sum - 1| = {worst_sum:.1e}")

# probability vectors expose uncertainty, which aggregation will exploit
p = models["rf"].predict_proba(te.X[:3])
print("\nfirst three RF probability rows:")
print(np.round(p, 3))
