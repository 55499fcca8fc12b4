"""Pipeline stages, the CLI subcommands, and artifact determinism."""

import json
import warnings

import numpy as np
import pytest

from fieldfuse.cli import main
from fieldfuse.pipeline import (
    RunConfig,
    StageError,
    load_labels,
    run_pipeline,
    save_labels,
    stage_synth,
)
from fieldfuse.synthgen import SynthSpec, generate


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    """A small scene bundle + fields.geojson shared by the CLI tests."""
    out = tmp_path_factory.mktemp("synth")
    spec = SynthSpec(seed=3, n_classes=3, n_fields=12, field_pixels=(50, 90), grid_size=(96, 96), sigma=60.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        stage_synth(spec, out)
    return out


def small_config(synth_dir, out, classifier=None, balancing=None, alpha=0.35, seed=7):
    return RunConfig(
        scene=str(synth_dir / "scene"),
        fields=str(synth_dir / "fields.geojson"),
        out=str(out),
        seed=seed,
        classifier=classifier or {"kind": "rf", "params": {"n_trees": 5, "max_depth": 8}},
        balancing=balancing or {"scheme": "ros"},
        aggregation={"strategies": ["majority", "average", "bayesian"], "alpha": alpha},
        ingest={"min_pixels": 30, "excluded": []},
    )


class TestLabelsArtifact:
    def test_round_trip(self, synth_dir, tmp_path):
        from fieldfuse.ingest import load_fields, load_scene, rasterize_fields

        bundle = load_scene(synth_dir / "scene")
        fields = load_fields(synth_dir / "fields.geojson")
        h, w = bundle.target_shape(10)
        label = rasterize_fields(fields, bundle.geo_transform, h, w)
        save_labels(label, fields, tmp_path / "labels")
        again, meta = load_labels(tmp_path / "labels")
        np.testing.assert_array_equal(again.field_index, label.field_index)
        np.testing.assert_array_equal(again.class_index, label.class_index)
        assert again.class_catalog == label.class_catalog
        assert {m["field_id"] for m in meta} == {f.field_id for f in fields.fields}
        counts = label.pixel_counts()
        for i, m in enumerate(meta):
            assert m["pixels"] == counts[i]


class TestRunPipeline:
    def test_full_run_produces_reports(self, synth_dir, tmp_path):
        config = small_config(synth_dir, tmp_path / "run")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            reports = run_pipeline(config)
        levels = {(r.level, r.strategy) for r in reports}
        assert ("pixel", "") in levels
        assert ("field", "bayesian") in levels and ("field", "majority") in levels
        out = tmp_path / "run"
        for name in (
            "labels/labels.json",
            "stack/stack.json",
            "split.csv",
            "model.npz",
            "probs_test.csv",
            "probs_validation.csv",
            "preds_bayesian.csv",
            "report_field_bayesian.json",
            "report_pixel.json",
            "comparison.txt",
            "run_summary.json",
        ):
            assert (out / name).exists(), name

    def test_rerun_is_bit_identical(self, synth_dir, tmp_path):
        files = [
            "probs_test.csv",
            "probs_validation.csv",
            "preds_majority.csv",
            "preds_average.csv",
            "preds_bayesian.csv",
            "report_field_bayesian.json",
            "report_pixel.json",
            "comparison.txt",
            "run_summary.json",
        ]
        out = tmp_path / "rerun"
        config = small_config(synth_dir, out)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            run_pipeline(config)
            first = {f: (out / f).read_bytes() for f in files}
            run_pipeline(config)
        for f in files:
            assert (out / f).read_bytes() == first[f], f

    def test_grid_alpha_selection_runs(self, synth_dir, tmp_path):
        config = small_config(synth_dir, tmp_path / "grid")
        config.aggregation = {"strategies": ["bayesian"], "alpha": "grid", "grid": [0.3, 0.4]}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            run_pipeline(config)
        summary = json.loads((tmp_path / "grid" / "run_summary.json").read_text())
        assert summary["alpha"] in (0.3, 0.4)

    def test_weighting_scheme_runs(self, synth_dir, tmp_path):
        config = small_config(
            synth_dir,
            tmp_path / "w",
            classifier={"kind": "gb", "params": {"n_rounds": 3, "max_depth": 3}},
            balancing={"scheme": "weighting"},
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            reports = run_pipeline(config)
        assert any(r.level == "pixel" for r in reports)

    def test_env_seed_override(self, synth_dir, tmp_path, monkeypatch):
        monkeypatch.setenv("FIELDFUSE_SEED", "99")
        config = small_config(synth_dir, tmp_path / "env", seed=7)
        assert config.seed == 99

    def test_reports_emitted_as_json_csv_and_text(self, synth_dir, tmp_path):
        config = small_config(synth_dir, tmp_path / "fmt")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            run_pipeline(config)
        out = tmp_path / "fmt"
        for stem in ("report_pixel", "report_field_bayesian"):
            assert (out / f"{stem}.json").exists()
            assert (out / f"{stem}.csv").read_text().startswith("class,precision,recall,f1")
            assert "OA:" in (out / f"{stem}.txt").read_text()

    def test_suffix_rerun_reproduces_files(self, synth_dir, tmp_path):
        from fieldfuse.pipeline import stage_aggregate, stage_evaluate_fields

        config = small_config(synth_dir, tmp_path / "suffix")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            run_pipeline(config)
        out = tmp_path / "suffix"
        preds = (out / "preds_bayesian.csv").read_bytes()
        report = (out / "report_field_bayesian.json").read_bytes()
        (out / "preds_bayesian.csv").unlink()
        (out / "report_field_bayesian.json").unlink()
        catalog = json.loads((out / "labels" / "labels.json").read_text())["class_catalog"]
        stage_aggregate(out / "probs_test.csv", catalog, out / "preds_bayesian.csv", "bayesian", 0.35)
        stage_evaluate_fields(
            out / "preds_bayesian.csv", out / "labels", out / "report_field_bayesian.json", "rf", "ros"
        )
        assert (out / "preds_bayesian.csv").read_bytes() == preds
        assert (out / "report_field_bayesian.json").read_bytes() == report

    def test_normalizer_fitted_on_train_pixels_only(self, synth_dir, tmp_path):
        # leakage guard: the persisted normalizer must equal statistics
        # recomputed from train-split labeled pixels alone
        from fieldfuse.classifiers import load_model
        from fieldfuse.dataset import SplitAssignment
        from fieldfuse.features import load_stack

        config = small_config(synth_dir, tmp_path / "leak")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            run_pipeline(config)
        out = tmp_path / "leak"
        _, _, norm = load_model(out / "model.npz")
        stack = load_stack(out / "stack")
        label, _ = load_labels(out / "labels")
        split = SplitAssignment.load_csv(out / "split.csv")
        train_fields = set(split.fields_of("train"))
        pos = [i for i, f in enumerate(label.field_ids) if f in train_fields]
        mask = np.isin(label.field_index, np.array(pos))
        sel = stack.values[:, mask]
        np.testing.assert_allclose(norm.mean, sel.mean(axis=1), atol=1e-12)
        np.testing.assert_allclose(norm.std, np.maximum(sel.std(axis=1), 1e-8), atol=1e-12)

    def test_sigma_zero_full_pipeline_reaches_perfect_field_oa(self, tmp_path):
        # noiseless scene with distinct class means: every classifier and
        # every aggregation strategy must recover every field
        spec = SynthSpec(
            seed=2, n_classes=3, n_fields=21, field_pixels=(50, 90), grid_size=(128, 128), sigma=0.0
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            stage_synth(spec, tmp_path)
        for kind, params in (
            ("knn", {"k": 3}),
            ("rf", {"n_trees": 5, "max_depth": 8}),
            ("gb", {"n_rounds": 3, "max_depth": 3, "learning_rate": 0.3}),
        ):
            config = small_config(
                tmp_path, tmp_path / f"run_{kind}", classifier={"kind": kind, "params": params},
                balancing={"scheme": "none"},
            )
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                reports = run_pipeline(config)
            for r in reports:
                if r.level == "field":
                    assert r.oa == pytest.approx(100.0), (kind, r.strategy)

    def test_aggregate_geojson_join(self, synth_dir, tmp_path):
        config = small_config(synth_dir, tmp_path / "gj")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            run_pipeline(config)
        out = tmp_path / "gj"
        catalog = json.loads((out / "labels" / "labels.json").read_text())["class_catalog"]
        from fieldfuse.pipeline import stage_aggregate

        stage_aggregate(
            out / "probs_test.csv",
            catalog,
            out / "preds2.csv",
            "bayesian",
            0.35,
            fields_geojson=out / "fields_retained.geojson",
            out_geojson=out / "preds.geojson",
        )
        doc = json.loads((out / "preds.geojson").read_text())
        assert doc["type"] == "FeatureCollection" and doc["features"]
        props = doc["features"][0]["properties"]
        assert {"field_id", "crop", "pred_class", "pred_crop", "strategy"} <= set(props)

    def test_unknown_config_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"scene": "x", "fields": "y", "out": "z", "bogus": 1}))
        with pytest.raises(StageError, match="unknown config keys"):
            RunConfig.from_json(path)

    def test_bad_fractions_rejected(self, tmp_path):
        with pytest.raises(StageError, match="fractions"):
            RunConfig(scene="s", fields="f", out="o", split={"fractions": [0.9, 0.2, 0.2]})


class TestCliSubcommands:
    def test_synth_and_ingest_and_features(self, tmp_path):
        out = tmp_path / "s"
        assert main([
            "synth", "--out", str(out), "--seed", "4", "--classes", "3",
            "--fields", "10", "--min-pixels", "50", "--max-pixels", "80",
            "--grid", "96", "--sigma", "30",
        ]) == 0
        assert (out / "scene" / "scene.json").exists()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            code = main([
                "ingest", "--scene", str(out / "scene"), "--fields", str(out / "fields.geojson"),
                "--out", str(out), "--min-pixels", "30", "--exclude",
            ])
        assert code == 0
        assert (out / "labels" / "labels.json").exists()
        assert main(["features", "--scene", str(out / "scene"), "--out", str(out),
                     "--dump-channel", "NDVI"]) == 0
        assert (out / "channels" / "NDVI.f32").exists()

    def test_whole_stage_chain(self, synth_dir, tmp_path, capsys):
        out = tmp_path / "chain"
        out.mkdir()
        scene = str(synth_dir / "scene")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            assert main(["ingest", "--scene", scene, "--fields", str(synth_dir / "fields.geojson"),
                         "--out", str(out), "--min-pixels", "30", "--exclude"]) == 0
            assert main(["features", "--scene", scene, "--out", str(out)]) == 0
            assert main(["split", "--labels", str(out / "labels"), "--out", str(out)]) == 0
            assert main(["train", "--stack", str(out), "--labels", str(out / "labels"),
                         "--split", str(out / "split.csv"), "--out", str(out),
                         "--classifier", "rf", "--params", '{"n_trees": 4, "max_depth": 6}',
                         "--balancing", "ros", "--seed", "5"]) == 0
            assert main(["predict", "--model", str(out / "model.npz"), "--stack", str(out),
                         "--labels", str(out / "labels"), "--split", str(out / "split.csv"),
                         "--out", str(out), "--splits", "test"]) == 0
            assert main(["aggregate", "--probs", str(out / "probs_test.csv"),
                         "--strategy", "bayesian", "--alpha", "0.35",
                         "--labels", str(out / "labels"),
                         "--out", str(out / "preds.csv")]) == 0
            assert main(["evaluate", "--preds", str(out / "preds.csv"),
                         "--labels", str(out / "labels"), "--classifier", "rf",
                         "--balancing", "ros", "--out", str(out / "rep_field.json")]) == 0
            assert main(["evaluate", "--probs", str(out / "probs_test.csv"),
                         "--labels", str(out / "labels"), "--classifier", "rf",
                         "--balancing", "ros", "--out", str(out / "rep_pixel.json")]) == 0
            assert main(["compare", "--reports", str(out / "rep_field.json"),
                         str(out / "rep_pixel.json"), "--out", str(out / "cmp.txt")]) == 0
        text = (out / "cmp.txt").read_text()
        assert "Pixel-wise results" in text and "Field-wise overall accuracy" in text

    def test_run_subcommand(self, synth_dir, tmp_path, capsys):
        config = small_config(synth_dir, tmp_path / "cli_run")
        cfg_path = tmp_path / "config.json"
        doc = {k: getattr(config, k) for k in config.__dataclass_fields__}
        cfg_path.write_text(json.dumps(doc))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            assert main(["run", "--config", str(cfg_path), "--threads", "2"]) == 0
        captured = capsys.readouterr()
        assert "OA" in captured.out

    def test_missing_scene_exits_with_ingest_code(self, tmp_path, capsys):
        code = main([
            "ingest", "--scene", str(tmp_path / "nope"), "--fields", str(tmp_path / "nope.geojson"),
            "--out", str(tmp_path),
        ])
        assert code == 12
        assert "[ingest]" in capsys.readouterr().err

    def test_aggregate_needs_catalog_source(self, tmp_path, capsys):
        (tmp_path / "p.csv").write_text("row,col,field_id,p_0,p_1\n")
        code = main(["aggregate", "--probs", str(tmp_path / "p.csv"), "--strategy", "majority",
                     "--out", str(tmp_path / "o.csv")])
        assert code == 17
        assert "[aggregate]" in capsys.readouterr().err

    def test_bad_config_exits_with_config_code(self, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"scene": "s", "fields": "f", "out": "o", "classifier": {"kind": "svm"}}))
        assert main(["run", "--config", str(cfg)]) == 10
