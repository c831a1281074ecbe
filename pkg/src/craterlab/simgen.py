"""Procedural lunar-like scene synthesis with exact crater ground truth.

Stands in for a planetary terrain simulator at desk scale: craters are
sampled from a truncated power-law size-frequency distribution, stamped
into a fractal-noise heightfield as parabolic bowls with exponentially
decaying rims, degraded by age (amplitude scaling plus blur), and rendered
with Lambertian hillshading. Every output is a pure function of the scene
spec, and the placement list is the scene's exact ground truth.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from craterlab import kernels
from craterlab.ingest import GeoRaster, MosaicGeoref

# fractal base terrain: coarsest octave spans the scene in this many cells
BASE_CELLS = 4
LACUNARITY = 2.0
PERSISTENCE = 0.5
# rim tail is truncated where exp(-(d-1)/decay) ~ 6e-6
TAIL_DECAY_LENGTHS = 12.0


@dataclass(frozen=True)
class SimSceneSpec:
    """All inputs of one simulated scene."""

    seed: int = 0
    width_px: int = 416
    height_px: int = 416
    crater_density: float = 120.0      # craters per megapixel
    sfd_exponent: float = 2.0          # p(r) ~ r^-exponent on [r_min, r_max]
    r_min_px: float = 3.0
    r_max_px: float = 100.0
    side_length_cap_px: float = 200.0  # no crater wider than this
    depth_ratio: float = 0.2           # depth / diameter
    rim_ratio: float = 0.04            # rim height / diameter
    edge_decay: float = 0.2            # rim tail decay length, in radii
    age_range: tuple = (0.0, 0.8)
    sun_azimuth_deg: float = 0.0       # 0 = sun from the east (+x)
    sun_elevation_deg: float = 30.0
    base_noise_amplitude: float = 6.0  # height units (px) of the coarsest octave
    base_noise_octaves: int = 4

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("scene dimensions must be positive")
        if self.crater_density < 0:
            raise ValueError("crater density must be >= 0")
        if self.sfd_exponent <= 0:
            raise ValueError("sfd_exponent must be > 0")
        if not 0.5 <= self.r_min_px < self.r_max_px:
            raise ValueError("need 0.5 <= r_min_px < r_max_px")
        if 2.0 * self.r_max_px > self.side_length_cap_px:
            raise ValueError("2 * r_max_px exceeds the crater side-length cap")
        if self.depth_ratio < 0 or self.rim_ratio < 0 or self.edge_decay < 0:
            raise ValueError("profile ratios must be non-negative")
        lo, hi = self.age_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError("age_range must be ordered within [0, 1]")
        if not 0.0 < self.sun_elevation_deg <= 90.0:
            raise ValueError("sun elevation must lie in (0, 90]")
        if self.base_noise_amplitude < 0 or self.base_noise_octaves < 0:
            raise ValueError("noise parameters must be non-negative")

    @property
    def megapixels(self):
        return self.width_px * self.height_px / 1e6


@dataclass(frozen=True)
class CraterPlacement:
    """One crater's exact ground truth within a scene."""

    cx_px: float
    cy_px: float
    r_px: float
    age: float
    depth_px: float


def _rng_streams(seed):
    """Independent child generators for (craters, terrain noise)."""
    craters_ss, noise_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(craters_ss), np.random.default_rng(noise_ss)


def sample_power_law_radii(rng, n, r_min, r_max, exponent):
    """Inverse-CDF sampling of the truncated power law p(r) ~ r^-exponent."""
    u = rng.random(n)
    if abs(exponent - 1.0) < 1e-12:
        return r_min * np.exp(u * math.log(r_max / r_min))
    e = 1.0 - exponent
    return (r_min ** e + u * (r_max ** e - r_min ** e)) ** (1.0 / e)


def sample_craters(spec, rng=None):
    """Draw the scene's crater population.

    Count is round(crater_density * megapixels); radii follow the truncated
    power law, centers are uniform over the scene rectangle, ages uniform
    over the spec's age range. Deterministic given the spec seed.
    """
    if rng is None:
        rng, _ = _rng_streams(spec.seed)
    n = int(round(spec.crater_density * spec.megapixels))
    if n == 0:
        return []
    radii = sample_power_law_radii(rng, n, spec.r_min_px, spec.r_max_px, spec.sfd_exponent)
    cx = rng.uniform(0.0, spec.width_px, n)
    cy = rng.uniform(0.0, spec.height_px, n)
    lo, hi = spec.age_range
    ages = rng.uniform(lo, hi, n) if hi > lo else np.full(n, lo)
    return [
        CraterPlacement(
            cx_px=float(cx[i]),
            cy_px=float(cy[i]),
            r_px=float(radii[i]),
            age=float(ages[i]),
            depth_px=float(spec.depth_ratio * 2.0 * radii[i]),
        )
        for i in range(n)
    ]


def crater_profile(d_norm, spec, r_px, age=0.0):
    """Height delta at normalized distance d_norm (in crater radii).

    Parabolic bowl reaching -depth at the center, rim peak of height
    rim_ratio * 2r at d_norm = 1, exterior tail decaying as
    exp(-(d_norm - 1) / edge_decay); zero decay length means a hard edge.
    The whole profile scales by (1 - age); age blur happens at composition.
    """
    d = np.asarray(d_norm, dtype=np.float64)
    if (d < 0).any():
        raise ValueError("d_norm must be >= 0")
    depth = spec.depth_ratio * 2.0 * r_px
    rim = spec.rim_ratio * 2.0 * r_px
    inside = d <= 1.0
    prof = np.where(inside, -depth + (depth + rim) * (d * d), 0.0)
    if spec.edge_decay > 0.0:
        tail = rim * np.exp(-(d - 1.0) / spec.edge_decay)
        prof = np.where(inside, prof, tail)
    prof = (1.0 - age) * prof
    if np.isscalar(d_norm):
        return float(prof)
    return prof


def _fractal_base(spec, rng):
    """Multi-octave value noise, lacunarity 2, persistence 0.5."""
    h, w = spec.height_px, spec.width_px
    out = np.zeros((h, w), dtype=np.float64)
    if spec.base_noise_amplitude == 0.0 or spec.base_noise_octaves == 0:
        return out
    cell = max(w, h) / float(BASE_CELLS)
    amp = spec.base_noise_amplitude
    for _ in range(spec.base_noise_octaves):
        if cell < 2.0:
            break
        nx = int((w - 1) / cell) + 2
        ny = int((h - 1) / cell) + 2
        lattice = rng.uniform(-1.0, 1.0, size=(ny + 1, nx + 1))
        out += amp * kernels.value_noise(w, h, cell, lattice)
        cell /= LACUNARITY
        amp *= PERSISTENCE
    return out


def compose_heightfield(spec, placements):
    """Fractal base plus additively overprinted crater profiles."""
    _, noise_rng = _rng_streams(spec.seed)
    hf = _fractal_base(spec, noise_rng)
    h, w = hf.shape
    for p in placements:
        depth = spec.depth_ratio * 2.0 * p.r_px
        rim = spec.rim_ratio * 2.0 * p.r_px
        sigma = p.age * p.r_px / 4.0
        half = p.r_px * (1.0 + TAIL_DECAY_LENGTHS * spec.edge_decay) + 4.0 * sigma + 2.0
        x0 = max(int(math.floor(p.cx_px - half)), 0)
        x1 = min(int(math.ceil(p.cx_px + half)) + 1, w)
        y0 = max(int(math.floor(p.cy_px - half)), 0)
        y1 = min(int(math.ceil(p.cy_px + half)) + 1, h)
        if x0 >= x1 or y0 >= y1:
            continue
        stamp = kernels.crater_stamp(
            x1 - x0, y1 - y0,
            p.cx_px - x0, p.cy_px - y0,
            p.r_px, depth, rim, spec.edge_decay,
        )
        stamp *= (1.0 - p.age)
        if sigma > 0.0:
            stamp = gaussian_filter(stamp, sigma=sigma, mode="constant")
        hf[y0:y1, x0:x1] += stamp
    return hf


def shade(hf, sun_azimuth_deg, sun_elevation_deg, gain=1.0, offset=0.0):
    """Lambertian hillshade of a heightfield, clipped to [0, 1].

    Azimuth 0 puts the sun in the east (+x); 90 in the north (-y in image
    coordinates). The raw max(0, n . s) image is rescaled by the fixed
    affine gain/offset before clipping.
    """
    if not 0.0 < sun_elevation_deg <= 90.0:
        raise ValueError("sun elevation must lie in (0, 90]")
    az = math.radians(sun_azimuth_deg)
    el = math.radians(sun_elevation_deg)
    sx = math.cos(el) * math.cos(az)
    sy = -math.cos(el) * math.sin(az)
    sz = math.sin(el)
    raw = kernels.hillshade(np.asarray(hf, dtype=np.float64), sx, sy, sz)
    return np.clip(gain * raw + offset, 0.0, 1.0)


def _scene_georef(spec):
    # synthetic scenes carry a nominal 100 m/px equirectangular tag
    return MosaicGeoref(width_px=spec.width_px, height_px=spec.height_px)


def generate_scene(spec):
    """Render one scene; returns (GeoRaster, exact placement list)."""
    placements = sample_craters(spec)
    hf = compose_heightfield(spec, placements)
    img = shade(hf, spec.sun_azimuth_deg, spec.sun_elevation_deg)
    raster = GeoRaster(georef=_scene_georef(spec), pixels=img)
    return raster, placements
