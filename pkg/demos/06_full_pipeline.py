"""
The full pipeline, end to end
=============================

Generate a scene, then run ingest -> features -> split -> balance ->
train -> predict -> aggregate -> evaluate in one call. Every intermediate
is persisted under the output directory, and each stage can be re-run on
its own (also via the `fieldfuse` CLI; see demo_config.json).
"""

import json
import warnings
from pathlib import Path

from fieldfuse import RunConfig, SynthSpec, run_pipeline
from fieldfuse.pipeline import stage_synth

OUT = Path(__file__).parent / "output" / "pipeline_demo"

from fieldfuse.rng import derive_rng
from fieldfuse.synthgen import N_BANDS

spec = SynthSpec(
    seed=5,
    n_classes=5,
    n_fields=60,
    field_pixels=(50, 150),
    grid_size=(256, 256),
    sigma=500.0,
    field_sigma=400.0,
    band_means=derive_rng(5, "demo-means").uniform(1800, 3200, size=(5, N_BANDS)),
)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    stage_synth(spec, OUT)
print(f"synthetic inputs under {OUT}")

config = RunConfig(
    scene=str(OUT / "scene"),
    fields=str(OUT / "fields.geojson"),
    out=str(OUT / "run"),
    seed=17,
    classifier={"kind": "rf", "params": {"n_trees": 40, "max_depth": 12, "min_samples_leaf": 10}},
    balancing={"scheme": "ros"},
    aggregation={"strategies": ["majority", "average", "bayesian"], "alpha": "grid"},
    ingest={"min_pixels": 50, "excluded": []},
    threads=2,
)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    reports = run_pipeline(config)

print("\nper-strategy results on the test fields:")
for r in reports:
    tag = r.level if r.level == "pixel" else f"field/{r.strategy}"
    print(f"  {tag:16s} OA {r.oa:6.2f}%  macro F1 {r.macro_f1:.3f}")

summary = json.loads((OUT / "run" / "run_summary.json").read_text())
print(f"\ngrid search picked alpha = {summary['alpha']}")
print("\ncomparison table:\n")
print((OUT / "run" / "comparison.txt").read_text())

# a ready-made CLI config equivalent to the run above:
#   fieldfuse run --config demos/demo_config.json
cfg_path = Path(__file__).parent / "demo_config.json"
doc = {k: getattr(config, k) for k in config.__dataclass_fields__}
cfg_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
print(f"wrote CLI config to {cfg_path}")
