"""Numpy fallback implementations of the hot kernels.

Each function here has a compiled twin in ``_core.pyx``. Both backends
evaluate the same arithmetic expressions in the same order, so integer and
comparison-based outputs (disk masks, confusion counts, tile crops) are
bit-identical across backends. Float fields agree bitwise too, except for
the crater rim tail where ``exp`` may differ in the last ulp between
numpy's vectorized libm and the C runtime's.
"""

import numpy as np


def value_noise(width, height, cell_px, lattice):
    """Sample one octave of bilinear value noise on a pixel grid.

    lattice holds random corner values on a grid with spacing cell_px;
    pixel (x, y) samples lattice coordinate (x / cell_px, y / cell_px)
    with smoothstep-weighted bilinear interpolation.
    """
    lattice = np.ascontiguousarray(lattice, dtype=np.float64)
    inv = 1.0 / float(cell_px)
    u = np.arange(width, dtype=np.float64) * inv
    v = np.arange(height, dtype=np.float64) * inv
    i = np.floor(u).astype(np.intp)
    j = np.floor(v).astype(np.intp)
    tx = u - i
    ty = v - j
    sx = tx * tx * (3.0 - 2.0 * tx)
    sy = ty * ty * (3.0 - 2.0 * ty)

    v00 = lattice[np.ix_(j, i)]
    v10 = lattice[np.ix_(j, i + 1)]
    v01 = lattice[np.ix_(j + 1, i)]
    v11 = lattice[np.ix_(j + 1, i + 1)]
    sx = sx[None, :]
    sy = sy[:, None]
    top = v00 + (v10 - v00) * sx
    bot = v01 + (v11 - v01) * sx
    return top + (bot - top) * sy


def crater_stamp(width, height, cx, cy, r, depth, rim, edge_decay):
    """Evaluate a fresh-crater height profile over a local window.

    Radial profile in units of crater radii d = |p - c| / r:
      d <= 1: parabolic bowl  -depth + (depth + rim) * d^2
      d >  1: rim tail        rim * exp(-(d - 1) / edge_decay)
    A zero decay length gives a hard edge (0 outside the rim).
    """
    x = np.arange(width, dtype=np.float64) + 0.5 - cx
    y = np.arange(height, dtype=np.float64) + 0.5 - cy
    d = np.sqrt(x[None, :] * x[None, :] + y[:, None] * y[:, None]) / r
    inside = d <= 1.0
    out = np.where(inside, -depth + (depth + rim) * (d * d), 0.0)
    if edge_decay > 0.0:
        tail = rim * np.exp(-(d - 1.0) / edge_decay)
        out = np.where(inside, out, tail)
    return out


def hillshade(hf, sx, sy, sz):
    """Lambertian shading of a heightfield with unit sun vector (sx, sy, sz).

    Surface normals come from central differences (one-sided at the
    borders, matching np.gradient). Output is max(0, n . s), unscaled.
    """
    hf = np.ascontiguousarray(hf, dtype=np.float64)
    gy, gx = np.gradient(hf)
    num = -gx * sx - gy * sy + sz
    den = np.sqrt(gx * gx + gy * gy + 1.0)
    return np.maximum(num / den, 0.0)


def fill_disks(mask, craters):
    """OR filled disks into a uint8 mask; pixel-center inclusion test.

    craters is an (n, 3) float array of (cx, cy, r) in pixel units. Pixel
    (x, y) is set when (x + 0.5 - cx)^2 + (y + 0.5 - cy)^2 <= r^2.
    """
    h, w = mask.shape
    craters = np.asarray(craters, dtype=np.float64).reshape(-1, 3)
    for cx, cy, r in craters:
        if r <= 0.0:
            continue
        x0 = max(int(np.floor(cx - r - 0.5)), 0)
        x1 = min(int(np.ceil(cx + r + 0.5)) + 1, w)
        y0 = max(int(np.floor(cy - r - 0.5)), 0)
        y1 = min(int(np.ceil(cy + r + 0.5)) + 1, h)
        if x0 >= x1 or y0 >= y1:
            continue
        dx = np.arange(x0, x1, dtype=np.float64) + 0.5 - cx
        dy = np.arange(y0, y1, dtype=np.float64) + 0.5 - cy
        hit = dx[None, :] * dx[None, :] + dy[:, None] * dy[:, None] <= r * r
        mask[y0:y1, x0:x1] |= hit.astype(np.uint8)
    return mask


def confusion_counts(pred, gt):
    """Pixel confusion tallies (tp, fp, fn, tn) for two binary masks."""
    p = np.asarray(pred, dtype=bool)
    g = np.asarray(gt, dtype=bool)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {g.shape}")
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = p.size - tp - fp - fn
    return tp, fp, fn, tn
