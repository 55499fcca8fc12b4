"""Distance-weighted k-nearest-neighbor classifier.

Neighbor weights are inversely proportional to Euclidean distance; when a
query coincides exactly with one or more training points, the
zero-distance neighbors receive all the probability mass, split equally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DISTANCE_FLOOR = 1e-12


@dataclass(eq=False)
class KnnClassifier:
    k: int = 8
    n_classes: int = 0
    X_: np.ndarray = field(default=None, repr=False)
    y_: np.ndarray = field(default=None, repr=False)

    def fit(self, X, y, n_classes=None):
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if len(X) == 0:
            raise ValueError("empty training set")
        if self.k < 1 or self.k > len(X):
            raise ValueError(f"k={self.k} outside [1, {len(X)}]")
        self.X_ = X
        self.y_ = y
        self.n_classes = int(y.max()) + 1 if n_classes is None else int(n_classes)
        return self

    def predict_proba(self, X, chunk=256):
        X = np.ascontiguousarray(X, dtype=np.float64)
        n = len(X)
        out = np.empty((n, self.n_classes), dtype=np.float64)
        train_sq = np.einsum("ij,ij->i", self.X_, self.X_)
        for lo in range(0, n, chunk):
            hi = min(lo + chunk, n)
            out[lo:hi] = self._chunk_proba(X[lo:hi], train_sq)
        return out

    def _chunk_proba(self, Q, train_sq):
        k = self.k
        q_sq = np.einsum("ij,ij->i", Q, Q)
        d2 = np.maximum(q_sq[:, None] + train_sq[None, :] - 2.0 * (Q @ self.X_.T), 0.0)
        if k < d2.shape[1]:
            part = np.argpartition(d2, k - 1, axis=1)[:, :k]
        else:
            part = np.broadcast_to(np.arange(d2.shape[1]), (len(Q), d2.shape[1])).copy()
        # order the k candidates by (distance, training index) for stable ties
        part = np.sort(part, axis=1)
        pd = np.take_along_axis(d2, part, axis=1)
        order = np.argsort(pd, axis=1, kind="stable")
        nbr = np.take_along_axis(part, order, axis=1)
        # exact distances for the selected pairs (the gemm expansion can
        # miss an exact zero by one ulp)
        diff = Q[:, None, :] - self.X_[nbr]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        weights = 1.0 / np.maximum(dist, DISTANCE_FLOOR)
        zero = dist == 0.0
        has_zero = zero.any(axis=1)
        if has_zero.any():
            weights[has_zero] = zero[has_zero].astype(np.float64)
        probs = np.zeros((len(Q), self.n_classes), dtype=np.float64)
        rows = np.repeat(np.arange(len(Q)), nbr.shape[1])
        np.add.at(probs, (rows, self.y_[nbr].ravel()), weights.ravel())
        return probs / probs.sum(axis=1, keepdims=True)
