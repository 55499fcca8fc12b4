"""Random forest of Gini-impurity trees over bootstrap samples.

Per-tree randomness is derived from the master seed and the tree index, so
fitting is reproducible regardless of how many worker threads run.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import ceil, sqrt

import numpy as np

from ..rng import derive_rng
from .tree import grow_tree


@dataclass(eq=False)
class RandomForest:
    n_trees: int = 200
    max_depth: int = 15
    min_samples_leaf: int = 10
    max_features: int | None = None  # defaults to ceil(sqrt(n_features)) at fit time
    bootstrap: bool = True
    seed: int = 0
    n_classes: int = 0
    trees: list = field(default_factory=list, repr=False)

    def fit(self, X, y, n_classes=None, sample_weight=None, threads=1):
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if len(X) == 0:
            raise ValueError("empty training set")
        self.n_classes = int(y.max()) + 1 if n_classes is None else int(n_classes)
        w = np.ones(len(X)) if sample_weight is None else np.asarray(sample_weight, np.float64)
        mtry = self.max_features or ceil(sqrt(X.shape[1]))

        def build(t):
            rng = derive_rng(self.seed, "rf-tree", t)
            if self.bootstrap:
                idx = rng.integers(0, len(X), size=len(X))
                Xb, yb, wb = X[idx], y[idx], w[idx]
            else:
                Xb, yb, wb = X, y, w
            return grow_tree(
                Xb,
                yb,
                wb,
                n_classes=self.n_classes,
                max_depth=self.max_depth,
                min_samples_leaf=self.min_samples_leaf,
                max_features=mtry,
                rng=rng,
            )

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                self.trees = list(pool.map(build, range(self.n_trees)))
        else:
            self.trees = [build(t) for t in range(self.n_trees)]
        return self

    def predict_proba(self, X, threads=1):
        X = np.ascontiguousarray(X, dtype=np.float64)
        acc = np.zeros((len(X), self.n_classes), dtype=np.float64)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(lambda t: t.predict_value(X), self.trees))
        else:
            parts = [t.predict_value(X) for t in self.trees]
        for p in parts:
            acc += p
        return acc / len(self.trees)
