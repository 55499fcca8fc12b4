"""Feature engineering on the 10 m grid.

All bands are bilinearly upsampled to 10 m, rescaled to reflectance
(DN / 10000), extended with four vegetation indices (NDVI, EVI, NDRE,
MSAVI) and standardized to zero mean / unit variance using statistics from
training-split labeled pixels only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import BandRaster, SceneBundle

REFLECTANCE_SCALE = 10_000.0
INDEX_CHANNELS = ("NDVI", "EVI", "NDRE", "MSAVI")
STD_FLOOR = 1e-8


class FeatureError(Exception):
    pass


@dataclass(eq=False)
class FeatureStack:
    """17 real-valued channels on the 10 m grid (13 bands + 4 indices)."""

    channels: list
    values: np.ndarray  # (n_channels, height, width)

    def __post_init__(self):
        if self.values.ndim != 3 or self.values.shape[0] != len(self.channels):
            raise FeatureError("values must be (n_channels, height, width)")

    @property
    def shape(self):
        return self.values.shape[1:]

    def channel(self, name):
        return self.values[self.channels.index(name)]

    def as_matrix(self):
        """Flatten to (height*width, n_channels), row-major pixel order."""
        n = self.values.shape[0]
        return self.values.reshape(n, -1).T


@dataclass(eq=False)
class Normalizer:
    """Per-channel affine standardization, std floored for invertibility."""

    channels: list
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.maximum(np.asarray(self.std, dtype=np.float64), STD_FLOOR)

    def transform(self, values):
        return (values - self.mean) / self.std

    def inverse(self, values):
        return values * self.std + self.mean


def upsample_bilinear(band: BandRaster, target_resolution_m: int = 10) -> np.ndarray:
    """Resample one band to the target grid with pixel-center-aligned bilinear
    interpolation and clamp-to-edge handling. Factor 1 is the identity."""
    if band.resolution_m % target_resolution_m != 0:
        raise FeatureError(
            f"band {band.name}: {band.resolution_m} m not divisible by {target_resolution_m} m"
        )
    factor = band.resolution_m // target_resolution_m
    src = np.asarray(band.values, dtype=np.float64)
    if factor == 1:
        return src.copy()
    return _bilinear_zoom(src, factor)


def _bilinear_zoom(src, factor):
    h, w = src.shape
    # output center j maps to source-center coordinate (j + 0.5)/f - 0.5
    sy = np.clip((np.arange(h * factor) + 0.5) / factor - 0.5, 0.0, h - 1.0)
    sx = np.clip((np.arange(w * factor) + 0.5) / factor - 0.5, 0.0, w - 1.0)
    y0 = np.floor(sy).astype(np.intp)
    x0 = np.floor(sx).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (sy - y0)[:, None]
    fx = (sx - x0)[None, :]
    top = src[np.ix_(y0, x0)] * (1.0 - fx) + src[np.ix_(y0, x1)] * fx
    bot = src[np.ix_(y1, x0)] * (1.0 - fx) + src[np.ix_(y1, x1)] * fx
    return top * (1.0 - fy) + bot * fy


def compute_indices(reflectance: dict) -> dict:
    """Vegetation indices from reflectance grids keyed by band name.

    Degenerate pixels (non-positive denominator, negative radicand) map
    to 0 for that index.
    """
    b2, b4, b5, b8 = (reflectance[k] for k in ("B02", "B04", "B05", "B08"))
    out = {}
    out["NDVI"] = _safe_ratio(b8 - b4, b8 + b4)
    out["EVI"] = _safe_ratio(2.5 * (b8 - b4), b8 + 6.0 * b4 - 7.5 * b2 + 1.0)
    out["NDRE"] = _safe_ratio(b8 - b5, b8 + b5)
    s = 2.0 * b8 + 1.0
    radicand = s * s - 8.0 * (b8 - b4)
    ok = radicand >= 0.0
    msavi = np.zeros_like(b8)
    msavi[ok] = (s[ok] - np.sqrt(radicand[ok])) / 2.0
    out["MSAVI"] = msavi
    return out


def _safe_ratio(num, den):
    ok = den > 0.0
    out = np.zeros_like(num)
    out[ok] = num[ok] / den[ok]
    return out


def build_feature_stack(bundle: SceneBundle) -> FeatureStack:
    """Upsample all 13 bands, convert to reflectance, append the 4 indices.

    Channel order is the bundle's band order followed by NDVI, EVI, NDRE,
    MSAVI; two runs over the same bundle produce bit-identical stacks.
    """
    height, width = bundle.target_shape(10)
    names = [b.name for b in bundle.bands]
    grids = {}
    for band in bundle.bands:
        grids[band.name] = upsample_bilinear(band, 10) / REFLECTANCE_SCALE
    indices = compute_indices(grids)
    channels = names + list(INDEX_CHANNELS)
    values = np.empty((len(channels), height, width), dtype=np.float64)
    for i, name in enumerate(names):
        values[i] = grids[name]
    for j, name in enumerate(INDEX_CHANNELS):
        values[len(names) + j] = indices[name]
    if not np.isfinite(values).all():
        raise FeatureError("non-finite feature values after index computation")
    return FeatureStack(channels, values)


def fit_normalizer(stack: FeatureStack, pixel_mask: np.ndarray) -> Normalizer:
    """Per-channel mean and population std over the masked (training) pixels."""
    pixel_mask = np.asarray(pixel_mask, dtype=bool)
    if pixel_mask.shape != stack.shape:
        raise FeatureError("pixel mask shape does not match stack")
    if not pixel_mask.any():
        raise FeatureError("empty pixel set for normalizer fit")
    sel = stack.values[:, pixel_mask]
    return Normalizer(list(stack.channels), sel.mean(axis=1), sel.std(axis=1))


def apply_normalizer(normalizer: Normalizer, stack: FeatureStack) -> FeatureStack:
    """Standardize every pixel of every channel; train, validation and test alike."""
    if list(normalizer.channels) != list(stack.channels):
        raise FeatureError("normalizer channels do not match stack channels")
    scaled = (stack.values - normalizer.mean[:, None, None]) / normalizer.std[:, None, None]
    return FeatureStack(list(stack.channels), scaled)


# ---------------------------------------------------------------------------
# Stack persistence (raw f32 + JSON header, same idiom as scene bundles)
# ---------------------------------------------------------------------------

def save_stack(stack: FeatureStack, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(stack.values, dtype="<f4").tofile(path / "stack.f32")
    h, w = stack.shape
    header = {
        "channels": list(stack.channels),
        "height": h,
        "width": w,
        "dtype": "f32",
        "file": "stack.f32",
    }
    (path / "stack.json").write_text(
        json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_stack(path) -> FeatureStack:
    path = Path(path)
    header = json.loads((path / "stack.json").read_text(encoding="utf-8"))
    if header.get("dtype") != "f32":
        raise FeatureError(f"unsupported stack dtype {header.get('dtype')!r}")
    n = len(header["channels"])
    raw = np.fromfile(path / header["file"], dtype="<f4")
    shape = (n, header["height"], header["width"])
    if raw.size != np.prod(shape):
        raise FeatureError("stack payload length does not match header")
    return FeatureStack(list(header["channels"]), raw.reshape(shape).astype(np.float64))


def dump_channel(stack: FeatureStack, name: str, path) -> None:
    """Debug dump of one channel as raw f32 plus a JSON header."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    grid = stack.channel(name)
    fname = f"{name}.f32"
    np.ascontiguousarray(grid, dtype="<f4").tofile(path / fname)
    header = {
        "name": name,
        "width": grid.shape[1],
        "height": grid.shape[0],
        "dtype": "f32",
        "file": fname,
    }
    (path / f"{name}.json").write_text(
        json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
