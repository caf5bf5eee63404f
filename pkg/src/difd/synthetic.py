"""Procedural paired-scene generator for desk-scale experiments.

Each generated tile contains all five classes: woodland and water blobs,
building rectangles, a thin road polyline, and background elsewhere. Water is
deliberately painted with the background texture so the aerial view alone
cannot separate the two; the satellite bands carry a class-dependent spectral
signature (mixed per satellite pixel by area fraction), so only a fused model
can recover the water class. Generation is bit-reproducible from the seed.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import bands as band_math
from .bands import CHANNEL_NAMES
from .dataset import NUM_CLASSES, TilePair
from .errors import ConfigurationError, DataError
from .raster import Raster

BACKGROUND, BUILDING, WOODLAND, WATER, ROAD = range(NUM_CLASSES)

# class order: background, buildings, woodlands, water, roads
_AERIAL_COLORS = {
    WOODLAND: (0.18, 0.42, 0.20),
    BUILDING: (0.62, 0.38, 0.33),
    ROAD: (0.30, 0.30, 0.33),
}
_BACKGROUND_COLOR = (0.55, 0.50, 0.42)

_REFLECTANCE_SIGNATURES = {
    "B02": (0.14, 0.30, 0.04, 0.08, 0.16),
    "B03": (0.16, 0.30, 0.08, 0.12, 0.17),
    "B04": (0.18, 0.32, 0.05, 0.06, 0.18),
    "B05": (0.20, 0.33, 0.12, 0.05, 0.19),
    "B06": (0.22, 0.34, 0.25, 0.04, 0.20),
    "B07": (0.24, 0.34, 0.30, 0.03, 0.20),
    "B08": (0.26, 0.34, 0.42, 0.03, 0.21),
    "B8A": (0.26, 0.34, 0.44, 0.03, 0.21),
    "B11": (0.30, 0.40, 0.18, 0.02, 0.28),
    "B12": (0.26, 0.38, 0.09, 0.01, 0.27),
    "B02E": (0.18, 0.36, 0.06, 0.10, 0.20),
    "B03E": (0.20, 0.35, 0.10, 0.14, 0.21),
    "B04E": (0.22, 0.37, 0.07, 0.08, 0.22),
}
_SCL_CODE = (5, 5, 4, 6, 5)  # Sen2Cor-style: vegetation 4, bare 5, water 6


@dataclass(frozen=True)
class SynthSpec:
    """Shape mix and signal rules for the generator; shape sizes are tuned
    for 64 px tiles and scale linearly with the tile size."""

    tile: int = 64
    sat_size: int = 4
    pixel_size: float = 0.5
    crs: int = 2180
    woodland_blobs: tuple[int, int] = (1, 3)
    water_blobs: tuple[int, int] = (1, 2)
    buildings: tuple[int, int] = (2, 4)
    road_width: int = 2
    satellite_signal: bool = True
    band_noise: float = 0.02
    texture_noise: float = 0.04

    def __post_init__(self):
        if self.tile < 16 or self.sat_size < 1 or self.sat_size > self.tile:
            raise ConfigurationError("tile/satellite sizes are infeasible")
        if self.road_width < 1 or self.road_width > self.tile:
            raise ConfigurationError(
                f"road width {self.road_width} does not fit a {self.tile} px tile")
        if self.pixel_size <= 0:
            raise ConfigurationError("pixel size must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("woodland_blobs", "water_blobs", "buildings"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d) -> "SynthSpec":
        d = dict(d)
        for k in ("woodland_blobs", "water_blobs", "buildings"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


def _ellipse_mask(shape, rng, r_lo, r_hi):
    h, w = shape
    cy = rng.uniform(0.2 * h, 0.8 * h)
    cx = rng.uniform(0.2 * w, 0.8 * w)
    ry = rng.uniform(r_lo, r_hi)
    rx = rng.uniform(r_lo, r_hi)
    yy, xx = np.mgrid[0:h, 0:w]
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def _paint(aerial, mask, color, rng, noise):
    for ch in range(3):
        vals = color[ch] + rng.normal(0.0, noise, size=int(mask.sum()))
        aerial[ch][mask] = vals


def _draw_road(label, aerial, rng, width, noise):
    t = label.shape[0]
    horizontal = bool(rng.integers(0, 2))
    xs = np.array([0, rng.uniform(0.3 * t, 0.7 * t), t - 1])
    ys = rng.uniform(0.15 * t, 0.85 * t, size=3)
    pts = []
    for (x0, y0), (x1, y1) in zip(zip(xs[:-1], ys[:-1]), zip(xs[1:], ys[1:])):
        n = max(2, int(4 * max(abs(x1 - x0), abs(y1 - y0))))
        pts.append(np.stack([np.linspace(x0, x1, n), np.linspace(y0, y1, n)], axis=1))
    pts = np.concatenate(pts)
    mask = np.zeros_like(label, dtype=bool)
    offsets = range(-(width // 2), width - width // 2)
    for along, across in pts:
        a = int(round(along))
        b = int(round(across))
        for d in offsets:
            r, c = (b + d, a) if horizontal else (a, b + d)
            if 0 <= r < t and 0 <= c < t:
                mask[r, c] = True
    label[mask] = ROAD
    _paint(aerial, mask, _AERIAL_COLORS[ROAD], rng, noise)


def _scene(rng, spec: SynthSpec):
    t = spec.tile
    scale = t / 64.0
    label = np.zeros((t, t), dtype=np.uint8)
    aerial = np.stack([
        rng.normal(c, spec.texture_noise, size=(t, t)) for c in _BACKGROUND_COLOR
    ])

    for _ in range(int(rng.integers(spec.woodland_blobs[0], spec.woodland_blobs[1] + 1))):
        mask = _ellipse_mask((t, t), rng, 7 * scale, 13 * scale)
        label[mask] = WOODLAND
        _paint(aerial, mask, _AERIAL_COLORS[WOODLAND], rng, spec.texture_noise)

    for _ in range(int(rng.integers(spec.water_blobs[0], spec.water_blobs[1] + 1))):
        mask = _ellipse_mask((t, t), rng, 9 * scale, 13 * scale)
        # label only, and only over background: the aerial texture under water
        # stays exactly the background texture, so the water class is
        # recoverable solely from the satellite signature
        label[mask & (label == BACKGROUND)] = WATER

    for _ in range(int(rng.integers(spec.buildings[0], spec.buildings[1] + 1))):
        bh = int(rng.integers(round(6 * scale), round(12 * scale) + 1))
        bw = int(rng.integers(round(6 * scale), round(12 * scale) + 1))
        r0 = int(rng.integers(1, t - bh - 1))
        c0 = int(rng.integers(1, t - bw - 1))
        mask = np.zeros_like(label, dtype=bool)
        mask[r0:r0 + bh, c0:c0 + bw] = True
        label[mask] = BUILDING
        _paint(aerial, mask, _AERIAL_COLORS[BUILDING], rng, spec.texture_noise)

    _draw_road(label, aerial, rng, spec.road_width, spec.texture_noise)
    return label, np.clip(aerial, 0.0, 1.0)


def _block_fractions(label, sat_size, num_classes=NUM_CLASSES):
    t = label.shape[0]
    edges = (np.arange(sat_size + 1) * t) // sat_size
    frac = np.zeros((num_classes, sat_size, sat_size), dtype=np.float64)
    for i in range(sat_size):
        for j in range(sat_size):
            block = label[edges[i]:edges[i + 1], edges[j]:edges[j + 1]]
            counts = np.bincount(block.ravel(), minlength=num_classes)
            frac[:, i, j] = counts / counts.sum()
    return frac


def _satellite_bands(rng, spec: SynthSpec, label):
    s = spec.sat_size
    out = np.zeros((len(CHANNEL_NAMES), s, s), dtype=np.float32)
    if spec.satellite_signal:
        frac = _block_fractions(label, s)
        for name, sig in _REFLECTANCE_SIGNATURES.items():
            ch = CHANNEL_NAMES.index(name)
            clean = np.tensordot(np.asarray(sig), frac, axes=1)
            out[ch] = np.clip(clean + rng.normal(0.0, spec.band_noise, (s, s)), 0.0, 1.0)
        majority = frac.argmax(axis=0)
        out[CHANNEL_NAMES.index("SCL")] = np.asarray(_SCL_CODE)[majority]
        out[CHANNEL_NAMES.index("CLD")] = rng.uniform(0.0, 5.0, (s, s))
    else:
        for name in _REFLECTANCE_SIGNATURES:
            out[CHANNEL_NAMES.index(name)] = rng.uniform(0.0, 1.0, (s, s))
        out[CHANNEL_NAMES.index("SCL")] = rng.integers(0, 12, (s, s))
        out[CHANNEL_NAMES.index("CLD")] = rng.uniform(0.0, 100.0, (s, s))
    b08 = out[CHANNEL_NAMES.index("B08")]
    out[CHANNEL_NAMES.index("NDVI")] = band_math.ndvi(b08, out[CHANNEL_NAMES.index("B04")])
    out[CHANNEL_NAMES.index("NDWI")] = band_math.ndwi(out[CHANNEL_NAMES.index("B03")], b08)
    return out


def synth_generate(seed, n_pairs, spec: SynthSpec | None = None,
                   parent="synth") -> list[TilePair]:
    """Generate `n_pairs` co-registered tile pairs; pair i depends only on
    (seed, i), so regenerating any prefix is bit-identical."""
    spec = spec or SynthSpec()
    if n_pairs < 1:
        raise DataError("need at least one pair")
    t, s, px = spec.tile, spec.sat_size, spec.pixel_size
    pairs = []
    for i in range(n_pairs):
        rng = np.random.default_rng([int(seed), i])
        for _ in range(32):
            label, aerial = _scene(rng, spec)
            if len(np.unique(label)) == NUM_CLASSES:
                break
        else:
            raise ConfigurationError(
                "shape mix cannot place all classes; adjust the generator spec")
        sat = _satellite_bands(rng, spec, label)
        oy = -float(i) * t * px
        transform = (0.0, oy, px, -px)
        sat_scale = t * px / s
        pairs.append(TilePair(
            aerial=Raster(np.round(aerial * 255).astype(np.uint8), transform, spec.crs),
            satellite=Raster(sat, (0.0, oy, sat_scale, -sat_scale), spec.crs),
            label=Raster(label[None], transform, spec.crs),
            parent=parent, row=i, col=0,
            band_names=tuple(CHANNEL_NAMES),
        ))
    return pairs
