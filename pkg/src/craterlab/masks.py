"""Rasterize crater annotations into binary segmentation masks.

Craters are filled disks under a pixel-center inclusion rule: pixel (x, y)
is foreground iff some crater satisfies
(x + 0.5 - cx)^2 + (y + 0.5 - cy)^2 <= r^2. Overlapping craters merge; the
downstream task is binary segmentation, not instance separation.
"""

from dataclasses import dataclass, field

import numpy as np

from craterlab import kernels


@dataclass
class BinaryMask:
    """Pixel-aligned crater mask for one tile."""

    pixels: np.ndarray = field(repr=False)
    origin_x: int = 0
    origin_y: int = 0
    parent_id: str = ""
    tile_id: str = ""

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=bool)


def rasterize_craters(craters, width, height, origin_x=0, origin_y=0,
                      parent_id="", tile_id=""):
    """Union of filled disks over a width x height frame.

    craters is an iterable of (cx_px, cy_px, r_px) in the frame's own
    coordinates; disks partially or wholly outside contribute only their
    in-frame pixels. An empty list yields an all-background mask.
    """
    buf = np.zeros((height, width), dtype=np.uint8)
    craters = np.asarray(list(craters), dtype=np.float64).reshape(-1, 3)
    if len(craters):
        kernels.fill_disks(buf, craters)
    return BinaryMask(
        pixels=buf.astype(bool),
        origin_x=origin_x,
        origin_y=origin_y,
        parent_id=parent_id,
        tile_id=tile_id,
    )


def craters_in_tile(projected, tile):
    """Translate parent-frame craters into a tile's frame and clip.

    Keeps craters whose disk intersects the tile rectangle
    [0, T] x [0, T] (continuous coordinates); the rest are dropped.
    """
    th, tw = tile.pixels.shape
    kept = []
    for cx, cy, r in projected:
        lx = cx - tile.origin_x
        ly = cy - tile.origin_y
        nx = min(max(lx, 0.0), float(tw))
        ny = min(max(ly, 0.0), float(th))
        if (lx - nx) ** 2 + (ly - ny) ** 2 <= r * r:
            kept.append((lx, ly, r))
    return kept


def mask_for_tile(tile, projected):
    """Rasterize the parent-frame crater list into a mask paired to a tile."""
    local = craters_in_tile(projected, tile)
    th, tw = tile.pixels.shape
    return rasterize_craters(
        local, tw, th,
        origin_x=tile.origin_x,
        origin_y=tile.origin_y,
        parent_id=tile.parent_id,
        tile_id=tile.tile_id,
    )
