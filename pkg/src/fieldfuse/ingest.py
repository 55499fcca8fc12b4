"""Scene and field ingestion.

Loads multi-band raster scenes from the raw-binary bundle format, parses
field polygons from GeoJSON, rasterizes polygons onto the 10 m grid and
applies the field-level filtering rules (minimum pixel count, excluded
classes).

Scene bundle layout: a directory holding ``scene.json`` plus one raw
little-endian uint16 band-sequential file per band, row-major.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

VALID_RESOLUTIONS = (10, 20, 60)
DEFAULT_MIN_PIXELS = 50
DEFAULT_EXCLUDED = ("Dates", "Intercrop")


class IngestError(Exception):
    """Malformed scene bundle or field file."""


@dataclass(eq=False)
class GeoTransform:
    """Maps pixel (row, col) centers of the 10 m grid to map coordinates."""

    x0: float
    y0: float
    pixel_size_m: float = 10.0

    def pixel_centers(self, height, width, resolution_m=None):
        """Return (xs, ys) center coordinates for a grid at the given resolution."""
        res = self.pixel_size_m if resolution_m is None else float(resolution_m)
        xs = self.x0 + (np.arange(width) + 0.5) * res
        ys = self.y0 + (np.arange(height) + 0.5) * res
        return xs, ys


@dataclass(eq=False)
class BandRaster:
    """One spectral band: a 2-D grid of non-negative digital numbers."""

    name: str
    resolution_m: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise IngestError(f"band {self.name}: values must be 2-D")
        if self.resolution_m not in VALID_RESOLUTIONS:
            raise IngestError(
                f"band {self.name}: resolution {self.resolution_m} not in {VALID_RESOLUTIONS}"
            )
        if self.values.size and self.values.min() < 0:
            raise IngestError(f"band {self.name}: negative digital numbers")

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


@dataclass(eq=False)
class SceneBundle:
    """A 13-band scene whose bands all cover the same geographic extent."""

    scene_id: str
    geo_transform: GeoTransform
    bands: list

    def __post_init__(self):
        if len(self.bands) != 13:
            raise IngestError(f"scene {self.scene_id}: expected 13 bands, got {len(self.bands)}")
        extents = {(b.width * b.resolution_m, b.height * b.resolution_m) for b in self.bands}
        if len(extents) != 1:
            raise IngestError(f"scene {self.scene_id}: bands cover different extents: {extents}")

    @property
    def extent_m(self):
        b = self.bands[0]
        return (b.width * b.resolution_m, b.height * b.resolution_m)

    def target_shape(self, resolution_m=10):
        """(height, width) of the common grid at the given resolution."""
        ex, ey = self.extent_m
        return int(ey // resolution_m), int(ex // resolution_m)

    def band(self, name):
        for b in self.bands:
            if b.name == name:
                return b
        raise KeyError(name)


@dataclass(eq=False)
class FieldPolygon:
    """A labeled field: one or more closed rings in map units."""

    field_id: str
    rings: list
    crop_label: str
    area_ha: float = field(init=False)

    def __post_init__(self):
        self.rings = [np.asarray(r, dtype=np.float64) for r in self.rings]
        for ring in self.rings:
            if ring.ndim != 2 or ring.shape[1] != 2 or ring.shape[0] < 4:
                raise IngestError(f"field {self.field_id}: ring needs >= 4 (x, y) vertices")
            if not np.array_equal(ring[0], ring[-1]):
                raise IngestError(f"field {self.field_id}: ring is not closed")
        self.area_ha = polygon_area_m2(self.rings) / 10_000.0
        if self.area_ha <= 0:
            raise IngestError(f"field {self.field_id}: non-positive area")


@dataclass(eq=False)
class FieldSet:
    """Labeled field polygons plus the ordered class catalog."""

    fields: list
    class_catalog: list

    def __post_init__(self):
        ids = [f.field_id for f in self.fields]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise IngestError(f"duplicate field_id: {dupes}")
        known = set(self.class_catalog)
        for f in self.fields:
            if f.crop_label not in known:
                raise IngestError(f"field {f.field_id}: label {f.crop_label!r} not in catalog")

    def __len__(self):
        return len(self.fields)

    def class_index(self, label):
        return self.class_catalog.index(label)


@dataclass(eq=False)
class LabelRaster:
    """Per-pixel field assignment on the 10 m grid.

    ``field_index`` holds the position of the owning field in the FieldSet
    (-1 for unassigned pixels); ``class_index`` the owning field's class
    (-1 for unlabeled).
    """

    field_index: np.ndarray
    class_index: np.ndarray
    field_ids: list
    class_catalog: list

    @property
    def shape(self):
        return self.field_index.shape

    def pixel_counts(self):
        """Rasterized pixel count per field, aligned with ``field_ids``."""
        labeled = self.field_index[self.field_index >= 0]
        return np.bincount(labeled, minlength=len(self.field_ids))


def shoelace_area(ring):
    """Signed area of one closed ring (map units squared)."""
    x, y = ring[:-1, 0], ring[:-1, 1]
    x2, y2 = ring[1:, 0], ring[1:, 1]
    return 0.5 * float(np.sum(x * y2 - x2 * y))


def polygon_area_m2(rings):
    """Exterior ring area minus hole areas, all via the shoelace formula."""
    area = abs(shoelace_area(rings[0]))
    for hole in rings[1:]:
        area -= abs(shoelace_area(hole))
    return area


def points_in_polygon(px, py, rings):
    """Even-odd point-in-polygon test; points exactly on an edge count as inside.

    ``px``/``py`` are flat coordinate arrays; returns a boolean array.
    """
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    inside = np.zeros(px.shape, dtype=bool)
    boundary = np.zeros(px.shape, dtype=bool)
    for ring in rings:
        for j in range(len(ring) - 1):
            x1, y1 = float(ring[j, 0]), float(ring[j, 1])
            x2, y2 = float(ring[j + 1, 0]), float(ring[j + 1, 1])
            cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
            on = (
                (cross == 0.0)
                & (px >= min(x1, x2))
                & (px <= max(x1, x2))
                & (py >= min(y1, y2))
                & (py <= max(y1, y2))
            )
            boundary |= on
            if y1 != y2:
                crosses = (y1 > py) != (y2 > py)
                xint = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
                inside ^= crosses & (px < xint)
    return inside | boundary


# ---------------------------------------------------------------------------
# Scene bundle I/O
# ---------------------------------------------------------------------------

def load_scene(path) -> SceneBundle:
    """Load a scene bundle directory (``scene.json`` + raw u16 band files)."""
    path = Path(path)
    header_path = path / "scene.json"
    if not header_path.is_file():
        raise IngestError(f"no scene.json under {path}")
    header = json.loads(header_path.read_text(encoding="utf-8"))
    gt = header["geo_transform"]
    transform = GeoTransform(float(gt["x0"]), float(gt["y0"]), float(gt["pixel_size_m"]))
    entries = header.get("bands", [])
    if len(entries) != 13:
        raise IngestError(f"missing band: expected 13 band entries, got {len(entries)}")
    bands = []
    for entry in entries:
        if entry.get("dtype") != "u16":
            raise IngestError(f"band {entry.get('name')}: unsupported dtype {entry.get('dtype')!r}")
        band_path = path / entry["file"]
        if not band_path.is_file():
            raise IngestError(f"missing band file {entry['file']}")
        w, h = int(entry["width"]), int(entry["height"])
        raw = np.fromfile(band_path, dtype="<u2")
        if raw.size != w * h:
            raise IngestError(
                f"band {entry['name']}: {raw.size} values in file, header says {w}x{h}"
            )
        bands.append(
            BandRaster(entry["name"], int(entry["resolution_m"]), raw.reshape(h, w))
        )
    return SceneBundle(header["scene_id"], transform, bands)


def save_scene(bundle: SceneBundle, path) -> None:
    """Write a scene bundle; ``load_scene(save_scene(...))`` round-trips exactly."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = []
    for band in bundle.bands:
        fname = f"{band.name}.u16"
        values = np.ascontiguousarray(band.values, dtype="<u2")
        values.tofile(path / fname)
        entries.append(
            {
                "name": band.name,
                "width": band.width,
                "height": band.height,
                "resolution_m": band.resolution_m,
                "file": fname,
                "dtype": "u16",
            }
        )
    gt = bundle.geo_transform
    header = {
        "scene_id": bundle.scene_id,
        "geo_transform": {"x0": gt.x0, "y0": gt.y0, "pixel_size_m": gt.pixel_size_m},
        "bands": entries,
    }
    (path / "scene.json").write_text(
        json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


# ---------------------------------------------------------------------------
# Field polygons
# ---------------------------------------------------------------------------

def load_fields(path) -> FieldSet:
    """Parse a GeoJSON FeatureCollection of labeled field polygons."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise IngestError(f"malformed GeoJSON: {exc}") from exc
    if doc.get("type") != "FeatureCollection":
        raise IngestError("expected a FeatureCollection")
    fields = []
    for i, feat in enumerate(doc.get("features", [])):
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Polygon":
            raise IngestError(f"feature {i}: non-polygon geometry {geom.get('type')!r}")
        props = feat.get("properties") or {}
        if "field_id" not in props or "crop" not in props:
            raise IngestError(f"feature {i}: missing field_id/crop properties")
        fields.append(
            FieldPolygon(str(props["field_id"]), geom["coordinates"], str(props["crop"]))
        )
    catalog = sorted({f.crop_label for f in fields})
    return FieldSet(fields, catalog)


def save_fields(fieldset: FieldSet, path) -> None:
    """Write a FieldSet as a GeoJSON FeatureCollection."""
    features = []
    for f in fieldset.fields:
        features.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[[float(x), float(y)] for x, y in ring] for ring in f.rings],
                },
                "properties": {"field_id": f.field_id, "crop": f.crop_label},
            }
        )
    doc = {"type": "FeatureCollection", "features": features}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Rasterization and filtering
# ---------------------------------------------------------------------------

def rasterize_fields(fields: FieldSet, transform: GeoTransform, height, width) -> LabelRaster:
    """Assign each 10 m pixel whose center falls inside a polygon to that field.

    Overlapping polygons resolve to the field listed first; a warning is
    emitted per conflicting field pair. Fields rasterizing to zero pixels
    draw a warning, not an error.
    """
    field_index = np.full((height, width), -1, dtype=np.int32)
    xs, ys = transform.pixel_centers(height, width)
    res = transform.pixel_size_m
    for fi, f in enumerate(fields.fields):
        allx = np.concatenate([r[:, 0] for r in f.rings])
        ally = np.concatenate([r[:, 1] for r in f.rings])
        c0 = max(0, int(np.floor((allx.min() - transform.x0) / res)) - 1)
        c1 = min(width, int(np.ceil((allx.max() - transform.x0) / res)) + 1)
        r0 = max(0, int(np.floor((ally.min() - transform.y0) / res)) - 1)
        r1 = min(height, int(np.ceil((ally.max() - transform.y0) / res)) + 1)
        if c0 >= c1 or r0 >= r1:
            warnings.warn(f"field {f.field_id} lies outside the grid; zero pixels assigned")
            continue
        gx, gy = np.meshgrid(xs[c0:c1], ys[r0:r1])
        hit = points_in_polygon(gx.ravel(), gy.ravel(), f.rings).reshape(gy.shape)
        window = field_index[r0:r1, c0:c1]
        clash = hit & (window >= 0)
        if clash.any():
            others = sorted({fields.fields[j].field_id for j in np.unique(window[clash])})
            warnings.warn(
                f"field {f.field_id} overlaps {others}; first-listed field keeps the pixels"
            )
            hit &= window < 0
        if not hit.any():
            warnings.warn(f"field {f.field_id} rasterized to zero pixels")
            continue
        window[hit] = fi

    class_of_field = np.array(
        [fields.class_index(f.crop_label) for f in fields.fields], dtype=np.int16
    )
    class_index = np.full((height, width), -1, dtype=np.int16)
    labeled = field_index >= 0
    class_index[labeled] = class_of_field[field_index[labeled]]
    return LabelRaster(
        field_index, class_index, [f.field_id for f in fields.fields], list(fields.class_catalog)
    )


def filter_fields(
    fields: FieldSet,
    label: LabelRaster,
    min_pixels: int = DEFAULT_MIN_PIXELS,
    excluded=DEFAULT_EXCLUDED,
) -> FieldSet:
    """Drop fields below the pixel threshold or with an excluded crop label.

    The class catalog is rebuilt (alphabetically) from the retained labels.
    """
    excluded = set(excluded)
    counts = label.pixel_counts()
    kept = [
        f
        for fi, f in enumerate(fields.fields)
        if counts[fi] >= min_pixels and f.crop_label not in excluded
    ]
    if not kept:
        raise IngestError("empty field set: all fields filtered out")
    catalog = sorted({f.crop_label for f in kept})
    return FieldSet(kept, catalog)
