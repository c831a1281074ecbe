"""Slice large rasters into fixed-size overlapping tiles.

The production geometry is 416 px tiles with a 208 px stride (half-tile
overlap). Only fully contained tiles are emitted; the ragged right/bottom
margin is dropped unless flush mode adds a final tile ending at the raster
edge.
"""

import json
from dataclasses import dataclass, field

import numpy as np

TILE_PX = 416
STRIDE_PX = 208


@dataclass
class Tile:
    """A square crop of a parent raster with its provenance."""

    pixels: np.ndarray = field(repr=False)
    origin_x: int = 0
    origin_y: int = 0
    parent_id: str = ""
    tile_id: str = ""
    provenance: str = "sim"


def tile_starts(length_px, tile_px, stride_px, flush=False):
    """Start offsets of fully contained tiles along one axis.

    With flush=True an extra start at length_px - tile_px is appended when
    the stride grid leaves a remainder, so the last tile touches the edge.
    """
    if tile_px > length_px:
        raise ValueError(f"tile larger than raster ({tile_px} > {length_px})")
    if stride_px <= 0 or stride_px > tile_px:
        raise ValueError("stride must satisfy 0 < stride <= tile size")
    starts = list(range(0, length_px - tile_px + 1, stride_px))
    if flush and starts[-1] != length_px - tile_px:
        starts.append(length_px - tile_px)
    return starts


def slice_raster(raster, tile_px=TILE_PX, stride_px=STRIDE_PX, parent_id="parent",
                 flush=False, provenance="sim"):
    """Cut a raster (2-D array or GeoRaster) into overlapping tiles.

    Crops are bit-exact views copied out of the parent; tile ids follow
    ``{parent_id}_r{row}_c{col}`` on the stride grid.
    """
    pixels = np.asarray(getattr(raster, "pixels", raster), dtype=np.float64)
    if pixels.ndim != 2:
        raise ValueError(f"expected 2-D raster, got shape {pixels.shape}")
    h, w = pixels.shape
    ys = tile_starts(h, tile_px, stride_px, flush=flush)
    xs = tile_starts(w, tile_px, stride_px, flush=flush)
    tiles = []
    for row, y in enumerate(ys):
        for col, x in enumerate(xs):
            tiles.append(Tile(
                pixels=pixels[y:y + tile_px, x:x + tile_px].copy(),
                origin_x=x,
                origin_y=y,
                parent_id=parent_id,
                tile_id=f"{parent_id}_r{row}_c{col}",
                provenance=provenance,
            ))
    return tiles


def tile_footprint_km2(tile_px, pixel_scale_m):
    """Ground footprint of one square tile in km^2."""
    if tile_px <= 0 or pixel_scale_m <= 0:
        raise ValueError("tile size and pixel scale must be positive")
    side_km = tile_px * pixel_scale_m / 1000.0
    return side_km * side_km


def reassemble(tiles, height, width):
    """Average overlapping tiles back into the parent frame.

    Returns (mean_pixels, coverage_count); uncovered pixels are 0 with
    count 0. Overlapping copies of bit-exact crops agree, so the mean
    reproduces the parent on covered pixels.
    """
    accum = np.zeros((height, width), dtype=np.float64)
    count = np.zeros((height, width), dtype=np.int64)
    for t in tiles:
        th, tw = t.pixels.shape
        accum[t.origin_y:t.origin_y + th, t.origin_x:t.origin_x + tw] += t.pixels
        count[t.origin_y:t.origin_y + th, t.origin_x:t.origin_x + tw] += 1
    mean = np.divide(accum, count, out=np.zeros_like(accum), where=count > 0)
    return mean, count


def write_manifest(path, parent_id, tile_px, stride_px, tiles, georef=None):
    """Record the tile grid and per-tile origins as JSON."""
    entries = [
        {
            "tile_id": t.tile_id,
            "origin_x": int(t.origin_x),
            "origin_y": int(t.origin_y),
            "provenance": t.provenance,
        }
        for t in tiles
    ]
    ids = [e["tile_id"] for e in entries]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate tile ids in manifest")
    doc = {
        "parent_id": parent_id,
        "tile_px": int(tile_px),
        "stride_px": int(stride_px),
        "georef": None if georef is None else {
            "width_px": georef.width_px,
            "height_px": georef.height_px,
            "pixel_scale_m": georef.pixel_scale_m,
            "lat_min_deg": georef.lat_min_deg,
            "lat_max_deg": georef.lat_max_deg,
            "lon_min_deg": georef.lon_min_deg,
            "lon_max_deg": georef.lon_max_deg,
            "projection": georef.projection,
        },
        "tiles": entries,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return doc
