"""Versioned model container (.npz): classifier, class catalog, normalizer.

Arrays round-trip bit-exactly; the metadata travels as a JSON string
entry. Format version 1.
"""

from __future__ import annotations

import json

import numpy as np

from ..features import Normalizer
from .boosting import GradientBoosting
from .forest import RandomForest
from .knn import KnnClassifier
from .tree import Tree

FORMAT = "fieldfuse-model"
VERSION = 1


class ModelFormatError(Exception):
    pass


def _pack_trees(trees):
    offsets = np.cumsum([0] + [t.n_nodes for t in trees])
    return {
        "tree_offsets": offsets.astype(np.int64),
        "tree_feature": np.concatenate([t.feature for t in trees]),
        "tree_threshold": np.concatenate([t.threshold for t in trees]),
        "tree_left": np.concatenate([t.left for t in trees]),
        "tree_right": np.concatenate([t.right for t in trees]),
        "tree_value": np.concatenate([t.value for t in trees]),
    }


def _unpack_trees(data):
    offsets = data["tree_offsets"]
    trees = []
    for i in range(len(offsets) - 1):
        lo, hi = int(offsets[i]), int(offsets[i + 1])
        trees.append(
            Tree(
                data["tree_feature"][lo:hi],
                data["tree_threshold"][lo:hi],
                data["tree_left"][lo:hi],
                data["tree_right"][lo:hi],
                data["tree_value"][lo:hi],
            )
        )
    return trees


def save_model(path, model, class_catalog, normalizer=None):
    meta = {"format": FORMAT, "version": VERSION, "class_catalog": list(class_catalog)}
    arrays = {}
    if isinstance(model, KnnClassifier):
        meta["kind"] = "knn"
        meta["params"] = {"k": model.k, "n_classes": model.n_classes}
        arrays["knn_X"] = model.X_
        arrays["knn_y"] = model.y_
    elif isinstance(model, RandomForest):
        meta["kind"] = "rf"
        meta["params"] = {
            "n_trees": model.n_trees,
            "max_depth": model.max_depth,
            "min_samples_leaf": model.min_samples_leaf,
            "max_features": model.max_features,
            "bootstrap": model.bootstrap,
            "seed": model.seed,
            "n_classes": model.n_classes,
        }
        arrays.update(_pack_trees(model.trees))
    elif isinstance(model, GradientBoosting):
        meta["kind"] = "gb"
        meta["params"] = {
            "n_rounds": model.n_rounds,
            "max_depth": model.max_depth,
            "learning_rate": model.learning_rate,
            "subsample": model.subsample,
            "min_samples_leaf": model.min_samples_leaf,
            "seed": model.seed,
            "n_classes": model.n_classes,
        }
        arrays.update(_pack_trees([t for rt in model.trees for t in rt]))
        arrays["gb_init_score"] = model.init_score
    else:
        raise ModelFormatError(f"cannot serialize {type(model).__name__}")
    if normalizer is not None:
        meta["normalizer_channels"] = list(normalizer.channels)
        arrays["norm_mean"] = normalizer.mean
        arrays["norm_std"] = normalizer.std
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    np.savez(path, **arrays)


def load_model(path):
    """Returns (model, class_catalog, normalizer-or-None)."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("format") != FORMAT:
            raise ModelFormatError("not a fieldfuse model container")
        if meta.get("version") != VERSION:
            raise ModelFormatError(f"unsupported model version {meta.get('version')}")
        params = meta["params"]
        kind = meta["kind"]
        if kind == "knn":
            model = KnnClassifier(k=params["k"], n_classes=params["n_classes"])
            model.X_ = data["knn_X"].copy()
            model.y_ = data["knn_y"].copy()
        elif kind == "rf":
            model = RandomForest(
                n_trees=params["n_trees"],
                max_depth=params["max_depth"],
                min_samples_leaf=params["min_samples_leaf"],
                max_features=params["max_features"],
                bootstrap=params["bootstrap"],
                seed=params["seed"],
            )
            model.n_classes = params["n_classes"]
            model.trees = _unpack_trees(data)
        elif kind == "gb":
            model = GradientBoosting(
                n_rounds=params["n_rounds"],
                max_depth=params["max_depth"],
                learning_rate=params["learning_rate"],
                subsample=params["subsample"],
                min_samples_leaf=params["min_samples_leaf"],
                seed=params["seed"],
            )
            model.n_classes = params["n_classes"]
            flat = _unpack_trees(data)
            model.init_score = data["gb_init_score"].copy()
            c = params["n_classes"]
            model.trees = [flat[i : i + c] for i in range(0, len(flat), c)]
        else:
            raise ModelFormatError(f"unknown model kind {kind!r}")
        normalizer = None
        if "norm_mean" in data:
            normalizer = Normalizer(
                meta["normalizer_channels"], data["norm_mean"].copy(), data["norm_std"].copy()
            )
    return model, meta["class_catalog"], normalizer
