"""Single-image crop classification with field-level probability aggregation.

Pipeline: ingest a 13-band scene and labeled field polygons, build a
17-channel feature stack (bands + vegetation indices), split fields,
balance classes, train a pixel classifier, and fuse per-pixel class
probabilities into one decision per field by majority voting, probability
averaging, or smoothed Bayesian log-odds fusion.
"""

from .aggregation import (
    DEFAULT_ALPHA,
    FieldPrediction,
    ProbabilityTable,
    SmoothingConfig,
    aggregate_average,
    aggregate_bayesian,
    aggregate_majority,
    aggregate_table,
    grid_search_alpha,
    smooth,
)
from .classifiers import GradientBoosting, KnnClassifier, RandomForest, load_model, save_model
from .dataset import (
    BalancingSpec,
    PixelDataset,
    SplitAssignment,
    assemble,
    balance,
    class_weights,
    stratified_field_split,
)
from .evaluation import ConfusionMatrix, EvalReport, compare_strategies, confusion, metrics
from .features import (
    FeatureStack,
    Normalizer,
    apply_normalizer,
    build_feature_stack,
    compute_indices,
    fit_normalizer,
    upsample_bilinear,
)
from .ingest import (
    BandRaster,
    FieldPolygon,
    FieldSet,
    GeoTransform,
    LabelRaster,
    SceneBundle,
    filter_fields,
    load_fields,
    load_scene,
    rasterize_fields,
    save_fields,
    save_scene,
)
from .pipeline import RunConfig, run_pipeline
from .synthgen import SynthSpec, generate

__version__ = "0.1.0"
