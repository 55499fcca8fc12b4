"""Dataset assembly, stratified field splitting, balancing schemes."""

import numpy as np
import pytest

from fieldfuse.dataset import (
    BalancingSpec,
    DatasetError,
    PixelDataset,
    SplitAssignment,
    assemble,
    balance,
    class_weights,
    dump_dataset_csv,
    greedy_split,
)
from fieldfuse.features import FeatureStack
from fieldfuse.ingest import LabelRaster


def toy_dataset(counts, n_features=2, seed=0):
    """PixelDataset with the requested per-class row counts."""
    rng = np.random.default_rng(seed)
    ys, Xs, fids = [], [], []
    for k, c in enumerate(counts):
        ys += [k] * c
        Xs.append(rng.normal(k * 10.0, 1.0, size=(c, n_features)))
        fids += [f"f{k}"] * c
    n = len(ys)
    return PixelDataset(
        np.vstack(Xs),
        np.array(ys),
        np.array(fids, dtype=str),
        np.zeros(n, dtype=np.int32),
        np.arange(n, dtype=np.int32),
        [f"class_{k}" for k in range(len(counts))],
    )


class TestGreedySplit:
    def test_eight_equal_fields_split_6_1_1(self):
        fids = [f"f{i}" for i in range(8)]
        split = greedy_split(fids, np.zeros(8, dtype=int), np.full(8, 10))
        names = [split.assignment[f] for f in fids]
        assert names.count("train") == 6
        assert names.count("validation") == 1
        assert names.count("test") == 1

    def test_single_field_class_goes_to_train_with_warning(self):
        with pytest.warns(UserWarning, match="only 1 field"):
            split = greedy_split(["solo"], np.array([0]), np.array([100]))
        assert split.assignment["solo"] == "train"

    def test_partition_property(self):
        rng = np.random.default_rng(3)
        n = 40
        fids = [f"f{i}" for i in range(n)]
        classes = rng.integers(0, 4, n)
        pixels = rng.integers(50, 400, n)
        split = greedy_split(fids, classes, pixels)
        assert sorted(split.assignment) == sorted(fids)

    def test_train_share_within_band(self):
        # each class's train pixel share should land in [0.70, 0.80]
        rng = np.random.default_rng(11)
        n = 60
        fids = [f"f{i}" for i in range(n)]
        classes = np.repeat(np.arange(3), n // 3)
        pixels = rng.integers(50, 200, n)
        split = greedy_split(fids, classes, pixels)
        for k in range(3):
            sel = classes == k
            total = pixels[sel].sum()
            train_px = sum(
                pixels[i] for i in range(n) if classes[i] == k and split.assignment[fids[i]] == "train"
            )
            assert 0.70 <= train_px / total <= 0.80

    def test_achieved_fractions_recount(self):
        rng = np.random.default_rng(5)
        n = 30
        fids = [f"f{i}" for i in range(n)]
        classes = rng.integers(0, 2, n)
        pixels = rng.integers(50, 300, n)
        split = greedy_split(fids, classes, pixels)
        for k, shares in split.achieved.items():
            sel = classes == k
            total = pixels[sel].sum()
            for j, name in enumerate(("train", "validation", "test")):
                got = sum(
                    pixels[i]
                    for i in range(n)
                    if classes[i] == k and split.assignment[fids[i]] == name
                )
                assert shares[j] == pytest.approx(got / total)

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        fids = [f"f{i}" for i in range(25)]
        classes = rng.integers(0, 3, 25)
        pixels = rng.integers(50, 400, 25)
        s1 = greedy_split(fids, classes, pixels)
        s2 = greedy_split(fids, classes, pixels)
        assert s1.assignment == s2.assignment

    def test_bad_fractions_rejected(self):
        with pytest.raises(DatasetError, match="summing to 1"):
            greedy_split(["a"], np.array([0]), np.array([10]), fractions=(0.5, 0.2, 0.2))

    def test_csv_round_trip(self, tmp_path):
        split = greedy_split([f"f{i}" for i in range(8)], np.zeros(8, int), np.full(8, 10))
        split.save_csv(tmp_path / "split.csv")
        again = SplitAssignment.load_csv(tmp_path / "split.csv")
        assert again.assignment == split.assignment


class TestAssemble:
    def build_scene(self):
        # 4x6 grid, two fields of 6 pixels each plus unlabeled background
        field_index = np.full((4, 6), -1, dtype=np.int32)
        field_index[0:2, 0:3] = 0
        field_index[2:4, 3:6] = 1
        class_index = np.where(field_index == 0, 0, np.where(field_index == 1, 1, -1)).astype(np.int16)
        label = LabelRaster(field_index, class_index, ["fa", "fb"], ["A", "B"])
        vals = np.arange(2 * 4 * 6, dtype=float).reshape(2, 4, 6)
        stack = FeatureStack(["c0", "c1"], vals)
        return stack, label

    def test_rows_partition_across_splits(self):
        stack, label = self.build_scene()
        split = SplitAssignment({"fa": "train", "fb": "test"})
        parts = assemble(stack, label, split)
        assert len(parts["train"]) == 6 and len(parts["test"]) == 6 and len(parts["validation"]) == 0
        total = len(parts["train"]) + len(parts["validation"]) + len(parts["test"])
        assert total == int((label.field_index >= 0).sum())

    def test_unlabeled_pixels_excluded(self):
        stack, label = self.build_scene()
        split = SplitAssignment({"fa": "train", "fb": "train"})
        parts = assemble(stack, label, split)
        coords = set(zip(parts["train"].rows.tolist(), parts["train"].cols.tolist()))
        assert (0, 5) not in coords and len(coords) == 12

    def test_features_match_stack(self):
        stack, label = self.build_scene()
        split = SplitAssignment({"fa": "train", "fb": "test"})
        ds = assemble(stack, label, split)["train"]
        for i in range(len(ds)):
            np.testing.assert_array_equal(ds.X[i], stack.values[:, ds.rows[i], ds.cols[i]])

    def test_dimension_mismatch(self):
        stack, label = self.build_scene()
        bad = FeatureStack(["c0"], np.zeros((1, 5, 5)))
        with pytest.raises(DatasetError, match="dimensions"):
            assemble(bad, label, SplitAssignment({}))


class TestBalancing:
    def test_ros_tops_up_to_majority(self):
        ds = toy_dataset([3, 1])
        out = balance(ds, BalancingSpec("ros", seed=1))
        np.testing.assert_array_equal(out.class_counts(), [3, 3])
        # originals retained verbatim
        np.testing.assert_array_equal(out.X[: len(ds)], ds.X)

    def test_rus_cuts_to_minority(self):
        ds = toy_dataset([5, 2, 7])
        out = balance(ds, BalancingSpec("rus", seed=1))
        np.testing.assert_array_equal(out.class_counts(), [2, 2, 2])

    def test_rus_subset_of_originals(self):
        ds = toy_dataset([6, 3])
        out = balance(ds, BalancingSpec("rus", seed=2))
        original = {tuple(row) for row in ds.X}
        assert all(tuple(row) in original for row in out.X)

    def test_weighting_formula(self):
        ds = toy_dataset([3, 1])
        w = balance(ds, BalancingSpec("weighting"))
        np.testing.assert_allclose(w, [4 / 6, 4 / 2])

    def test_weighting_zero_for_absent_class(self):
        ds = toy_dataset([3, 1])
        ds = PixelDataset(ds.X, ds.y, ds.field_ids, ds.rows, ds.cols, ["a", "b", "ghost"])
        w = class_weights(ds)
        assert w[2] == 0.0
        np.testing.assert_allclose(w[:2], [4 / 9, 4 / 3])  # N counts the full catalog

    def test_smote_counts_and_synthetic_tag(self):
        ds = toy_dataset([12, 4], seed=3)
        out = balance(ds, BalancingSpec("smote", seed=3))
        np.testing.assert_array_equal(out.class_counts(), [12, 12])
        assert (out.field_ids[len(ds):] == "synthetic").all()
        assert (out.y[len(ds):] == 1).all()

    def test_smote_rows_on_seed_neighbor_segment(self):
        ds = toy_dataset([30, 9], seed=4)
        out = balance(ds, BalancingSpec("smote", seed=4))
        prov = out.smote_provenance
        assert prov is not None
        synth = out.X[len(ds):]
        for j in range(len(synth)):
            a = ds.X[prov.seed_idx[j]]
            b = ds.X[prov.neighbor_idx[j]]
            expected = a + prov.lam[j] * (b - a)
            np.testing.assert_allclose(synth[j], expected, atol=1e-12)
            # neighbor must differ from seed and share the class
            assert prov.neighbor_idx[j] != prov.seed_idx[j]
            assert ds.y[prov.seed_idx[j]] == ds.y[prov.neighbor_idx[j]] == 1

    def test_smote_neighbors_are_k_nearest(self):
        ds = toy_dataset([20, 8], seed=5)
        out = balance(ds, BalancingSpec("smote", smote_k=3, seed=5))
        prov = out.smote_provenance
        members = np.nonzero(ds.y == 1)[0]
        for j in range(len(prov.lam)):
            s = prov.seed_idx[j]
            d = np.linalg.norm(ds.X[members] - ds.X[s], axis=1)
            d[members == s] = np.inf
            nearest3 = set(members[np.argsort(d, kind="stable")[:3]])
            assert prov.neighbor_idx[j] in nearest3

    def test_smote_midpoint_example(self):
        # seed (0,0), sole neighbor (2,2), lambda=0.5 -> (1,1)
        X = np.array([[0.0, 0.0], [2.0, 2.0], [5.0, 5.0], [6.0, 6.0], [7.0, 7.0]])
        y = np.array([0, 0, 1, 1, 1])
        ds = PixelDataset(
            X, y, np.array(["a"] * 5), np.zeros(5, np.int32), np.zeros(5, np.int32), ["m", "n"]
        )
        out = balance(ds, BalancingSpec("smote", smote_k=1, seed=0))
        prov = out.smote_provenance
        j = 0
        a, b = X[prov.seed_idx[j]], X[prov.neighbor_idx[j]]
        lam = prov.lam[j]
        np.testing.assert_allclose(out.X[len(ds) + j], a + lam * (b - a))
        # with k=1 the neighbor of each point is its unique nearest
        assert {prov.seed_idx[j], prov.neighbor_idx[j]} == {0, 1}

    def test_smote_single_row_class_duplicates_with_warning(self):
        ds = toy_dataset([4, 1], seed=6)
        with pytest.warns(UserWarning, match="single row"):
            out = balance(ds, BalancingSpec("smote", seed=6))
        np.testing.assert_array_equal(out.class_counts(), [4, 4])
        np.testing.assert_array_equal(out.X[len(ds):], np.repeat(ds.X[-1:], 3, axis=0))

    def test_determinism_same_seed(self):
        ds = toy_dataset([9, 4, 2], seed=7)
        for scheme in ("ros", "rus", "smote"):
            a = balance(ds, BalancingSpec(scheme, seed=42))
            b = balance(ds, BalancingSpec(scheme, seed=42))
            np.testing.assert_array_equal(a.X, b.X)
            np.testing.assert_array_equal(a.y, b.y)

    def test_streams_independent_across_schemes(self):
        # the same master seed gives each scheme its own stream
        ds = toy_dataset([9, 4], seed=8)
        ros = balance(ds, BalancingSpec("ros", seed=5))
        smote = balance(ds, BalancingSpec("smote", seed=5))
        assert not np.array_equal(ros.X[len(ds):], smote.X[len(ds):])

    def test_unknown_scheme_rejected(self):
        with pytest.raises(DatasetError, match="unknown balancing"):
            BalancingSpec("oversample-twice")

    def test_empty_train_rejected(self):
        ds = toy_dataset([1])
        empty = PixelDataset(
            ds.X[:0], ds.y[:0], ds.field_ids[:0], ds.rows[:0], ds.cols[:0], ds.class_catalog
        )
        with pytest.raises(DatasetError, match="empty training set"):
            balance(empty, BalancingSpec("ros"))

    def test_debug_dump(self, tmp_path):
        ds = toy_dataset([6, 3], seed=9)
        out = balance(ds, BalancingSpec("smote", seed=9))
        dump_dataset_csv(out, tmp_path / "balanced.csv")
        text = (tmp_path / "balanced.csv").read_text().splitlines()
        assert text[0].startswith("row,col,field_id,class")
        assert len(text) == 1 + len(out)
        assert "synthetic" in text[-1]
