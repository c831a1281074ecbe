# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled implementations of the hot kernels.

Mirrors ``_reference`` expression by expression; see that module's
docstring for the cross-backend equivalence contract.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, exp, floor, sqrt

cnp.import_array()


def value_noise(int width, int height, double cell_px, lattice):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] lat = np.ascontiguousarray(lattice, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((height, width), dtype=np.float64)
    cdef double inv = 1.0 / cell_px
    cdef cnp.ndarray[cnp.intp_t, ndim=1] ix = np.empty(width, dtype=np.intp)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sx = np.empty(width, dtype=np.float64)
    cdef Py_ssize_t x, y, i, j
    cdef double u, v, t, s, v00, v10, v01, v11, top, bot

    for x in range(width):
        u = x * inv
        i = <Py_ssize_t>floor(u)
        t = u - i
        ix[x] = i
        sx[x] = t * t * (3.0 - 2.0 * t)
    for y in range(height):
        v = y * inv
        j = <Py_ssize_t>floor(v)
        t = v - j
        s = t * t * (3.0 - 2.0 * t)
        for x in range(width):
            i = ix[x]
            v00 = lat[j, i]
            v10 = lat[j, i + 1]
            v01 = lat[j + 1, i]
            v11 = lat[j + 1, i + 1]
            top = v00 + (v10 - v00) * sx[x]
            bot = v01 + (v11 - v01) * sx[x]
            out[y, x] = top + (bot - top) * s
    return out


def crater_stamp(int width, int height, double cx, double cy, double r,
                 double depth, double rim, double edge_decay):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((height, width), dtype=np.float64)
    cdef Py_ssize_t x, y
    cdef double dx, dy, d
    for y in range(height):
        dy = y + 0.5 - cy
        for x in range(width):
            dx = x + 0.5 - cx
            d = sqrt(dx * dx + dy * dy) / r
            if d <= 1.0:
                out[y, x] = -depth + (depth + rim) * (d * d)
            elif edge_decay > 0.0:
                out[y, x] = rim * exp(-(d - 1.0) / edge_decay)
            else:
                out[y, x] = 0.0
    return out


def hillshade(hf, double sx, double sy, double sz):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] z = np.ascontiguousarray(hf, dtype=np.float64)
    cdef Py_ssize_t h = z.shape[0]
    cdef Py_ssize_t w = z.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((h, w), dtype=np.float64)
    cdef Py_ssize_t x, y, xm, xp, ym, yp
    cdef double gx, gy, num, den, val, hx, hy
    for y in range(h):
        ym = y - 1 if y > 0 else 0
        yp = y + 1 if y < h - 1 else h - 1
        hy = 2.0 if 0 < y < h - 1 else 1.0
        for x in range(w):
            xm = x - 1 if x > 0 else 0
            xp = x + 1 if x < w - 1 else w - 1
            hx = 2.0 if 0 < x < w - 1 else 1.0
            gx = (z[y, xp] - z[y, xm]) / hx
            gy = (z[yp, x] - z[ym, x]) / hy
            num = -gx * sx - gy * sy + sz
            den = sqrt(gx * gx + gy * gy + 1.0)
            val = num / den
            out[y, x] = val if val > 0.0 else 0.0
    return out


def fill_disks(mask, craters):
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] m = mask
    cdef cnp.ndarray[cnp.float64_t, ndim=2] cs = np.asarray(craters, dtype=np.float64).reshape(-1, 3)
    cdef Py_ssize_t h = m.shape[0]
    cdef Py_ssize_t w = m.shape[1]
    cdef Py_ssize_t k, x, y, x0, x1, y0, y1
    cdef double cx, cy, r, r2, dx, dy
    for k in range(cs.shape[0]):
        cx = cs[k, 0]
        cy = cs[k, 1]
        r = cs[k, 2]
        if r <= 0.0:
            continue
        r2 = r * r
        x0 = <Py_ssize_t>floor(cx - r - 0.5)
        x1 = <Py_ssize_t>ceil(cx + r + 0.5) + 1
        y0 = <Py_ssize_t>floor(cy - r - 0.5)
        y1 = <Py_ssize_t>ceil(cy + r + 0.5) + 1
        if x0 < 0:
            x0 = 0
        if y0 < 0:
            y0 = 0
        if x1 > w:
            x1 = w
        if y1 > h:
            y1 = h
        for y in range(y0, y1):
            dy = y + 0.5 - cy
            for x in range(x0, x1):
                dx = x + 0.5 - cx
                if dx * dx + dy * dy <= r2:
                    m[y, x] = 1
    return mask


def confusion_counts(pred, gt):
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] p = np.ascontiguousarray(
        np.asarray(pred, dtype=bool), dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] g = np.ascontiguousarray(
        np.asarray(gt, dtype=bool), dtype=np.uint8)
    if p.shape[0] != g.shape[0] or p.shape[1] != g.shape[1]:
        raise ValueError(
            f"shape mismatch: {(p.shape[0], p.shape[1])} vs {(g.shape[0], g.shape[1])}")
    cdef Py_ssize_t h = p.shape[0]
    cdef Py_ssize_t w = p.shape[1]
    cdef Py_ssize_t x, y
    cdef long tp = 0, fp = 0, fn = 0, tn = 0
    for y in range(h):
        for x in range(w):
            if p[y, x]:
                if g[y, x]:
                    tp += 1
                else:
                    fp += 1
            else:
                if g[y, x]:
                    fn += 1
                else:
                    tn += 1
    return tp, fp, fn, tn
