"""Crater database ingest and mosaic georeferencing.

Crater catalogues arrive as CSV with a configurable column map; the mosaic
is a plain equirectangular grayscale raster (100 m/px wide-angle product by
default, latitudes clipped to +/-60 degrees). Selenographic coordinates map
linearly to pixel coordinates.
"""

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from craterlab import imgio

log = logging.getLogger(__name__)

SCHEMA_KEYS = ("id", "lat", "lon", "radius")


@dataclass(frozen=True)
class CraterRecord:
    """One catalogue crater: selenographic position plus circular radius."""

    id: str
    lat_deg: float
    lon_deg: float
    radius_km: float

    def __post_init__(self):
        if not math.isfinite(self.lat_deg) or not -90.0 <= self.lat_deg <= 90.0:
            raise ValueError(f"crater {self.id}: latitude {self.lat_deg} outside [-90, 90]")
        if not math.isfinite(self.lon_deg):
            raise ValueError(f"crater {self.id}: non-finite longitude")
        if not math.isfinite(self.radius_km) or self.radius_km <= 0.0:
            raise ValueError(f"crater {self.id}: radius {self.radius_km} must be > 0")
        # normalize longitude into [0, 360)
        object.__setattr__(self, "lon_deg", self.lon_deg % 360.0)


@dataclass(frozen=True)
class MosaicGeoref:
    """Equirectangular georeference of a mosaic raster."""

    width_px: int
    height_px: int
    pixel_scale_m: float = 100.0
    lat_min_deg: float = -60.0
    lat_max_deg: float = 60.0
    lon_min_deg: float = 0.0
    lon_max_deg: float = 360.0
    projection: str = "equirectangular"

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("mosaic dimensions must be positive")
        if self.pixel_scale_m <= 0:
            raise ValueError("pixel scale must be positive")
        if self.lat_max_deg <= self.lat_min_deg:
            raise ValueError("lat_max_deg must exceed lat_min_deg")
        if self.lon_max_deg <= self.lon_min_deg:
            raise ValueError("longitude span must be positive")
        if self.projection != "equirectangular":
            raise ValueError(f"unsupported projection {self.projection!r}")

    @property
    def lat_span_deg(self):
        return self.lat_max_deg - self.lat_min_deg

    @property
    def lon_span_deg(self):
        return self.lon_max_deg - self.lon_min_deg


@dataclass
class GeoRaster:
    """A grayscale raster in [0, 1] with its georeference."""

    georef: MosaicGeoref
    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.shape != (self.georef.height_px, self.georef.width_px):
            raise ValueError(
                f"pixel buffer {self.pixels.shape} does not match georef "
                f"({self.georef.height_px}, {self.georef.width_px})")
        if not np.isfinite(self.pixels).all():
            raise ValueError("raster contains non-finite values")
        if self.pixels.min() < 0.0 or self.pixels.max() > 1.0:
            raise ValueError("raster values outside [0, 1]")


def load_crater_db(path, schema):
    """Parse a crater catalogue CSV.

    schema maps the logical keys id/lat/lon/radius to column names; the
    radius column is in kilometres. Rows with missing or non-numeric
    mandatory fields (or out-of-range latitude / non-positive radius) are
    skipped and counted, not fatal.

    Returns (records, skipped_row_count).
    """
    missing_keys = set(SCHEMA_KEYS) - set(schema)
    if missing_keys:
        raise ValueError(f"schema lacks keys {sorted(missing_keys)}")
    records = []
    skipped = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        unmapped = [schema[k] for k in SCHEMA_KEYS if schema[k] not in header]
        if unmapped:
            raise ValueError(f"{path}: header lacks mapped columns {unmapped}")
        for row in reader:
            try:
                rec = CraterRecord(
                    id=str(row[schema["id"]]).strip(),
                    lat_deg=float(row[schema["lat"]]),
                    lon_deg=float(row[schema["lon"]]),
                    radius_km=float(row[schema["radius"]]),
                )
            except (TypeError, ValueError):
                skipped += 1
                continue
            records.append(rec)
    if not records:
        log.warning("%s: no valid crater rows (skipped %d)", path, skipped)
    return records, skipped


def filter_craters(records, max_radius_km):
    """Keep craters strictly smaller than max_radius_km, order preserved."""
    if max_radius_km <= 0:
        raise ValueError("max_radius_km must be positive")
    return [r for r in records if r.radius_km < max_radius_km]


def project_to_pixel(rec, georef):
    """Project a crater to mosaic pixel coordinates.

    Returns (cx_px, cy_px, r_px), or None when the crater's latitude or
    longitude falls outside the georeferenced band (out-of-bounds flag, not
    an error).
    """
    if not georef.lat_min_deg <= rec.lat_deg <= georef.lat_max_deg:
        return None
    lon = georef.lon_min_deg + (rec.lon_deg - georef.lon_min_deg) % 360.0
    if lon > georef.lon_max_deg:
        return None
    cx = (lon - georef.lon_min_deg) / georef.lon_span_deg * georef.width_px
    cy = (georef.lat_max_deg - rec.lat_deg) / georef.lat_span_deg * georef.height_px
    r_px = rec.radius_km * 1000.0 / georef.pixel_scale_m
    return cx, cy, r_px


def pixel_to_latlon(cx, cy, georef):
    """Invert the equirectangular projection for a pixel coordinate."""
    lon = georef.lon_min_deg + cx / georef.width_px * georef.lon_span_deg
    lat = georef.lat_max_deg - cy / georef.height_px * georef.lat_span_deg
    return lat, lon


def load_mosaic(path, pixel_scale_m=100.0, lat_min_deg=-60.0, lat_max_deg=60.0,
                lon_min_deg=0.0, lon_max_deg=360.0):
    """Load a grayscale mosaic image as a georeferenced raster."""
    pixels = imgio.load_grayscale(path)
    georef = MosaicGeoref(
        width_px=pixels.shape[1],
        height_px=pixels.shape[0],
        pixel_scale_m=pixel_scale_m,
        lat_min_deg=lat_min_deg,
        lat_max_deg=lat_max_deg,
        lon_min_deg=lon_min_deg,
        lon_max_deg=lon_max_deg,
    )
    return GeoRaster(georef=georef, pixels=pixels)
