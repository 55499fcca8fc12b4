"""Multiclass gradient boosting with a softmax link.

Per-class scores start at the log class priors. Every round draws a fresh
50% (by default) row subsample without replacement and fits one
variance-reduction regression tree per class to the softmax gradient
residuals; prediction applies softmax to the accumulated scores.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..rng import derive_rng
from .tree import grow_tree

PRIOR_FLOOR = 1e-12


def softmax(scores):
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass(eq=False)
class GradientBoosting:
    n_rounds: int = 250
    max_depth: int = 10
    learning_rate: float = 0.05
    subsample: float = 0.5
    min_samples_leaf: int = 1
    seed: int = 0
    n_classes: int = 0
    init_score: np.ndarray = field(default=None, repr=False)
    trees: list = field(default_factory=list, repr=False)  # trees[round][class]

    def fit(self, X, y, n_classes=None, sample_weight=None, threads=1):
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        n = len(X)
        if n == 0:
            raise ValueError("empty training set")
        self.n_classes = int(y.max()) + 1 if n_classes is None else int(n_classes)
        if len(np.unique(y)) < 2:
            raise ValueError("gradient boosting needs at least 2 classes present")
        w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, np.float64)

        priors = np.bincount(y, weights=w, minlength=self.n_classes)
        priors = priors / priors.sum()
        self.init_score = np.log(np.maximum(priors, PRIOR_FLOOR))

        onehot = np.zeros((n, self.n_classes), dtype=np.float64)
        onehot[np.arange(n), y] = 1.0
        scores = np.tile(self.init_score, (n, 1))
        n_sub = max(1, int(n * self.subsample))

        self.trees = []
        for r in range(self.n_rounds):
            rng = derive_rng(self.seed, "gb-round", r)
            sub = np.sort(rng.choice(n, size=n_sub, replace=False))
            resid = onehot[sub] - softmax(scores[sub])
            Xs, ws = X[sub], w[sub]

            def fit_class(c):
                return grow_tree(
                    Xs,
                    resid[:, c],
                    ws,
                    max_depth=self.max_depth,
                    min_samples_leaf=self.min_samples_leaf,
                    regression=True,
                )

            if threads > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    round_trees = list(pool.map(fit_class, range(self.n_classes)))
            else:
                round_trees = [fit_class(c) for c in range(self.n_classes)]
            for c, tree in enumerate(round_trees):
                scores[:, c] += self.learning_rate * tree.predict_value(X)[:, 0]
            self.trees.append(round_trees)
        return self

    def decision_scores(self, X, threads=1):
        X = np.ascontiguousarray(X, dtype=np.float64)
        scores = np.tile(self.init_score, (len(X), 1))

        def round_contrib(round_trees):
            part = np.empty((len(X), self.n_classes))
            for c, tree in enumerate(round_trees):
                part[:, c] = tree.predict_value(X)[:, 0]
            return part

        if threads > 1 and self.trees:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(round_contrib, self.trees))
        else:
            parts = [round_contrib(rt) for rt in self.trees]
        for part in parts:
            scores += self.learning_rate * part
        return scores

    def predict_proba(self, X, threads=1):
        return softmax(self.decision_scores(X, threads=threads))
