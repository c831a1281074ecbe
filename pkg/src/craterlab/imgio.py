"""Image and placement-list file IO.

Grayscale rasters are stored as 8-bit PNG (16-bit PNG/TIFF accepted on
load), normalized to [0, 1] floats in memory. Binary masks are {0, 255}
single-channel PNGs. Crater placements travel as CSV next to the image.
"""

import csv

import numpy as np
from PIL import Image

PLACEMENT_FIELDS = ("cx_px", "cy_px", "r_px", "age")


def load_grayscale(path):
    """Load an 8- or 16-bit grayscale image as float64 in [0, 1]."""
    with Image.open(path) as img:
        if img.mode == "I;16":
            arr = np.asarray(img, dtype=np.float64) / 65535.0
        elif img.mode in ("I", "I;16B"):
            arr = np.asarray(img, dtype=np.float64) / 65535.0
        elif img.mode in ("L", "P"):
            arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
        elif img.mode == "F":
            arr = np.asarray(img, dtype=np.float64)
        else:
            arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    if arr.ndim != 2:
        raise ValueError(f"{path}: expected single-channel image, got shape {arr.shape}")
    return np.clip(arr, 0.0, 1.0)


def save_grayscale(path, pixels):
    """Write a [0, 1] float array as 8-bit grayscale PNG."""
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.min() < -1e-9 or arr.max() > 1.0 + 1e-9:
        raise ValueError(f"pixel values outside [0, 1]: min {arr.min()}, max {arr.max()}")
    q = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(q, mode="L").save(path)


def save_mask(path, pixels):
    """Write a boolean mask as a {0, 255} single-channel PNG."""
    arr = np.asarray(pixels)
    q = np.where(arr.astype(bool), np.uint8(255), np.uint8(0))
    Image.fromarray(q, mode="L").save(path)


def load_mask(path):
    """Load a {0, 255} mask PNG as a boolean array."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"))
    return arr >= 128


def save_placements(path, placements):
    """Write crater placements (objects with cx_px/cy_px/r_px/age) as CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PLACEMENT_FIELDS)
        for p in placements:
            writer.writerow([repr(p.cx_px), repr(p.cy_px), repr(p.r_px), repr(p.age)])


def load_placements(path):
    """Read a placement CSV into a list of (cx_px, cy_px, r_px, age) tuples."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(PLACEMENT_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing placement columns {sorted(missing)}")
        for row in reader:
            rows.append(tuple(float(row[k]) for k in PLACEMENT_FIELDS))
    return rows
