"""Binary decision trees grown with exhaustive threshold search.

Split candidates are midpoints between consecutive distinct sorted feature
values; ties between equal-cost splits resolve to the lowest feature
index, then the lowest threshold. Sample weights enter the impurity
statistics and leaf values as fractional counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(eq=False)
class Tree:
    """Flat array representation; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, n_classes) class distributions, or (n_nodes, 1) means

    @property
    def n_nodes(self):
        return len(self.feature)

    def depth(self):
        d = np.zeros(self.n_nodes, dtype=np.int32)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                d[self.left[i]] = d[i] + 1
                d[self.right[i]] = d[i] + 1
        return int(d.max()) if self.n_nodes else 0

    def predict_value(self, X):
        """Route every row to its leaf and return the leaf values."""
        node = np.zeros(len(X), dtype=np.int64)
        feature = self.feature
        while True:
            f = feature[node]
            internal = f >= 0
            if not internal.any():
                break
            rows = np.nonzero(internal)[0]
            fi = f[internal]
            go_left = X[rows, fi] <= self.threshold[node[internal]]
            node[rows] = np.where(
                go_left, self.left[node[internal]], self.right[node[internal]]
            )
        return self.value[node]


def grow_tree(
    X,
    y,
    sample_weight=None,
    *,
    n_classes=None,
    max_depth=15,
    min_samples_leaf=1,
    max_features=None,
    rng=None,
    regression=False,
):
    """Grow one tree. Classification minimizes weighted Gini impurity and
    leaves hold class distributions; regression minimizes weighted squared
    error and leaves hold means.

    ``max_features`` (with ``rng``) draws that many candidate features per
    node without replacement; None scans all features.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    n, d = X.shape
    if n == 0:
        raise ValueError("cannot grow a tree on zero rows")
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    if regression:
        y = np.asarray(y, dtype=np.float64)
    else:
        y = np.asarray(y, dtype=np.int64)
        if n_classes is None:
            n_classes = int(y.max()) + 1
    if max_features is not None and max_features < d and rng is None:
        raise ValueError("feature subsampling needs an rng")

    samples = np.arange(n, dtype=np.intp)
    features, thresholds, lefts, rights, values = [], [], [], [], []

    def new_node(val):
        features.append(-1)
        thresholds.append(0.0)
        lefts.append(-1)
        rights.append(-1)
        values.append(val)
        return len(features) - 1

    # stack of (lo, hi, depth, parent, is_left); parent links patched on pop
    stack = [(0, n, 0, -1, False)]
    while stack:
        lo, hi, depth, parent, is_left = stack.pop()
        idx = samples[lo:hi]
        yn, wn = y[idx], w[idx]
        if regression:
            tot_w = wn.sum()
            val = np.array([float(np.dot(wn, yn) / tot_w)])
            pure = bool(np.all(yn == yn[0]))
        else:
            counts = np.bincount(yn, weights=wn, minlength=n_classes)
            val = counts / counts.sum()
            pure = int((counts > 0).sum()) <= 1
        node_id = new_node(val)
        if parent >= 0:
            (lefts if is_left else rights)[parent] = node_id

        n_node = hi - lo
        if depth >= max_depth or n_node < 2 * min_samples_leaf or pure:
            continue
        if max_features is not None and max_features < d:
            feats = np.sort(rng.choice(d, size=max_features, replace=False))
        else:
            feats = np.arange(d)
        Xn = X[idx[:, None], feats[None, :]]
        if regression:
            split = _best_split_mse(Xn, yn, wn, min_samples_leaf)
        else:
            split = _best_split_gini(Xn, yn, wn, n_classes, min_samples_leaf)
        if split is None:
            continue
        col, thr = split
        mask = Xn[:, col] <= thr
        n_left = int(mask.sum())
        if n_left == 0 or n_left == n_node:
            # midpoint rounded onto a neighbor value; keep the node a leaf
            continue
        samples[lo:hi] = np.concatenate([idx[mask], idx[~mask]])
        features[node_id] = int(feats[col])
        thresholds[node_id] = thr
        # right pushed first so the left child pops (and is numbered) first
        stack.append((lo + n_left, hi, depth + 1, node_id, False))
        stack.append((lo, lo + n_left, depth + 1, node_id, True))

    return Tree(
        np.asarray(features, dtype=np.int32),
        np.asarray(thresholds, dtype=np.float64),
        np.asarray(lefts, dtype=np.int32),
        np.asarray(rights, dtype=np.int32),
        np.vstack(values),
    )


def _pick_best(cost, Xs, min_samples_leaf):
    """Shared candidate masking and tie-breaking over a (n-1, F) cost array.

    Scans column-major so equal costs resolve to the lowest feature column,
    then the lowest threshold.
    """
    m = Xs.shape[0]
    pos = np.arange(1, m)
    ok_count = (pos >= min_samples_leaf) & (m - pos >= min_samples_leaf)
    valid = ok_count[:, None] & (Xs[1:] > Xs[:-1])
    if not valid.any():
        return None
    cost = np.where(valid & ~np.isnan(cost), cost, np.inf)
    flat = int(np.argmin(cost.T.ravel()))
    col, p = divmod(flat, m - 1)
    if not np.isfinite(cost[p, col]):
        return None
    thr = 0.5 * (Xs[p, col] + Xs[p + 1, col])
    return col, float(thr)


def _best_split_gini(Xn, yn, wn, n_classes, min_samples_leaf):
    order = np.argsort(Xn, axis=0)
    Xs = np.take_along_axis(Xn, order, axis=0)
    ys = yn[order]
    ws = wn[order]
    onehot = (ys[:, :, None] == np.arange(n_classes)[None, None, :]) * ws[:, :, None]
    cum = np.cumsum(onehot, axis=0)
    tot = cum[-1]
    cw = np.cumsum(ws, axis=0)
    lw = cw[:-1]
    rw = cw[-1] - lw
    lsq = np.einsum("ifc,ifc->if", cum[:-1], cum[:-1])
    rcum = tot[None, :, :] - cum[:-1]
    rsq = np.einsum("ifc,ifc->if", rcum, rcum)
    with np.errstate(divide="ignore", invalid="ignore"):
        cost = (lw - lsq / lw) + (rw - rsq / rw)
    return _pick_best(cost, Xs, min_samples_leaf)


def _best_split_mse(Xn, yn, wn, min_samples_leaf):
    order = np.argsort(Xn, axis=0)
    Xs = np.take_along_axis(Xn, order, axis=0)
    ys = yn[order]
    ws = wn[order]
    cw = np.cumsum(ws, axis=0)
    cg = np.cumsum(ws * ys, axis=0)
    cg2 = np.cumsum(ws * ys * ys, axis=0)
    lw, lg, lg2 = cw[:-1], cg[:-1], cg2[:-1]
    rw = cw[-1] - lw
    rg = cg[-1] - lg
    rg2 = cg2[-1] - lg2
    with np.errstate(divide="ignore", invalid="ignore"):
        cost = (lg2 - lg * lg / lw) + (rg2 - rg * rg / rw)
    return _pick_best(cost, Xs, min_samples_leaf)
