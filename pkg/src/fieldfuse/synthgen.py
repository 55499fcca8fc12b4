"""Deterministic synthetic scenes: rectangular fields with class-conditional
Gaussian band values, emitted in the same bundle/GeoJSON formats the ingest
module consumes. A desk-scale stand-in for real imagery so the whole
pipeline runs with no external data."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .ingest import BandRaster, FieldPolygon, FieldSet, GeoTransform, SceneBundle
from .rng import derive_rng

SENTINEL2_BANDS = (
    ("B01", 60),
    ("B02", 10),
    ("B03", 10),
    ("B04", 10),
    ("B05", 20),
    ("B06", 20),
    ("B07", 20),
    ("B08", 10),
    ("B8A", 20),
    ("B09", 60),
    ("B10", 60),
    ("B11", 20),
    ("B12", 20),
)
N_BANDS = len(SENTINEL2_BANDS)


class SynthError(Exception):
    pass


@dataclass
class SynthSpec:
    seed: int = 0
    n_classes: int = 7
    n_fields: int = 200
    field_pixels: tuple = (50, 400)
    sigma: float = 100.0
    field_sigma: float = 0.0  # per-field offset shared by all its pixels
    grid_size: tuple = (504, 504)  # (height, width) at 10 m
    resolutions: str = "all10"  # "all10" or "sentinel2"
    band_means: np.ndarray | None = None  # (n_classes, 13) digital numbers
    background_dn: float = 100.0
    origin: tuple = (0.0, 0.0)
    max_attempts: int = 2000

    def __post_init__(self):
        if self.n_classes < 2:
            raise SynthError("need at least 2 classes")
        lo, hi = self.field_pixels
        if lo < 1 or hi < lo:
            raise SynthError(f"bad field pixel range {self.field_pixels}")
        if self.resolutions not in ("all10", "sentinel2"):
            raise SynthError(f"unknown resolution profile {self.resolutions!r}")
        h, w = self.grid_size
        if self.resolutions == "sentinel2" and (h % 6 or w % 6):
            raise SynthError("sentinel2 profile needs grid dimensions divisible by 6")
        if self.sigma < 0 or self.field_sigma < 0:
            raise SynthError("sigma must be >= 0")

    def band_table(self):
        if self.resolutions == "all10":
            return tuple((name, 10) for name, _ in SENTINEL2_BANDS)
        return SENTINEL2_BANDS

    def crop_name(self, k):
        return f"crop_{k:02d}"


def default_band_means(spec: SynthSpec) -> np.ndarray:
    """Per-class, per-band mean digital numbers, spread apart for separability."""
    rng = derive_rng(spec.seed, "synth-means")
    return rng.uniform(500.0, 4500.0, size=(spec.n_classes, N_BANDS))


def _field_shape(rng, lo, hi):
    count = int(rng.integers(lo, hi + 1))
    aspect = rng.uniform(0.5, 2.0)
    h = max(1, int(round(np.sqrt(count * aspect))))
    w = max(1, int(round(count / h)))
    if h * w < lo:
        w = int(np.ceil(lo / h))
    if h * w > hi:
        w = hi // h
    if w < 1 or not lo <= h * w <= hi:
        return None
    return h, w


def _place_fields(spec: SynthSpec):
    rng = derive_rng(spec.seed, "synth-place")
    H, W = spec.grid_size
    occupied = np.zeros((H, W), dtype=bool)
    rects = []
    for i in range(spec.n_fields):
        for _ in range(spec.max_attempts):
            shape = _field_shape(rng, *spec.field_pixels)
            if shape is None:
                continue
            h, w = shape
            if h > H - 2 or w > W - 2:
                continue
            r0 = int(rng.integers(1, H - h))
            c0 = int(rng.integers(1, W - w))
            # 1-pixel margin keeps neighboring polygons from sharing edges
            if occupied[r0 - 1 : r0 + h + 1, c0 - 1 : c0 + w + 1].any():
                continue
            occupied[r0 : r0 + h, c0 : c0 + w] = True
            rects.append((r0, c0, h, w))
            break
        else:
            raise SynthError(
                f"could not place field {i + 1} of {spec.n_fields}; placed {len(rects)}"
            )
    return rects


def _assign_classes(spec: SynthSpec):
    rng = derive_rng(spec.seed, "synth-classes")
    base = [i % spec.n_classes for i in range(min(3 * spec.n_classes, spec.n_fields))]
    extra = spec.n_fields - len(base)
    if extra > 0:
        base += list(rng.integers(0, spec.n_classes, size=extra))
    return np.array(base, dtype=np.int64)


def generate(spec: SynthSpec):
    """Build (SceneBundle, FieldSet) from the spec; fully deterministic per seed."""
    means = spec.band_means if spec.band_means is not None else default_band_means(spec)
    means = np.asarray(means, dtype=np.float64)
    if means.shape != (spec.n_classes, N_BANDS):
        raise SynthError(f"band_means must be ({spec.n_classes}, {N_BANDS})")
    rects = _place_fields(spec)
    classes = _assign_classes(spec)
    H, W = spec.grid_size
    x0, y0 = spec.origin

    noise_rng = derive_rng(spec.seed, "synth-noise")
    # correlated within-field deviation, constant across a field's pixels
    offsets = np.zeros((spec.n_fields, N_BANDS))
    if spec.field_sigma > 0:
        offsets = spec.field_sigma * derive_rng(spec.seed, "synth-field-offsets").standard_normal(
            (spec.n_fields, N_BANDS)
        )
    bands = []
    for b, (name, res) in enumerate(spec.band_table()):
        q = res // 10
        hn, wn = H // q, W // q
        grid = np.full((hn, wn), spec.background_dn, dtype=np.float64)
        if spec.sigma > 0:
            grid += spec.sigma * noise_rng.standard_normal((hn, wn))
        centers_y = (np.arange(hn) + 0.5) * res
        centers_x = (np.arange(wn) + 0.5) * res
        for fi, ((r0, c0, h, w), k) in enumerate(zip(rects, classes)):
            ri = np.searchsorted(centers_y, (r0 * 10.0, (r0 + h) * 10.0))
            ci = np.searchsorted(centers_x, (c0 * 10.0, (c0 + w) * 10.0))
            block = (ri[1] - ri[0], ci[1] - ci[0])
            if block[0] <= 0 or block[1] <= 0:
                continue
            patch = np.full(block, means[k, b] + offsets[fi, b])
            if spec.sigma > 0:
                patch += spec.sigma * noise_rng.standard_normal(block)
            grid[ri[0] : ri[1], ci[0] : ci[1]] = patch
        dn = np.clip(np.rint(grid), 0, 65535).astype("<u2")
        bands.append(BandRaster(name, res, dn))

    polys = []
    for i, ((r0, c0, h, w), k) in enumerate(zip(rects, classes)):
        xs = (x0 + c0 * 10.0, x0 + (c0 + w) * 10.0)
        ys = (y0 + r0 * 10.0, y0 + (r0 + h) * 10.0)
        ring = [
            [xs[0], ys[0]],
            [xs[1], ys[0]],
            [xs[1], ys[1]],
            [xs[0], ys[1]],
            [xs[0], ys[0]],
        ]
        polys.append(FieldPolygon(f"F{i:04d}", [ring], spec.crop_name(int(k))))

    catalog = sorted({p.crop_label for p in polys})
    if len(catalog) < spec.n_classes:
        warnings.warn("some classes received no fields")
    bundle = SceneBundle(f"synth-{spec.seed}", GeoTransform(x0, y0, 10.0), bands)
    return bundle, FieldSet(polys, catalog)
