"""Satellite band catalog, spectral indices, and band selection.

The 17-channel catalog order is fixed; selections index into it:

    0 NDVI   1 NDWI   2 B02    3 B03    4 B04    5 B05
    6 B06    7 B07    8 B08    9 B8A   10 B11   11 B12
   12 B02E  13 B03E  14 B04E  15 SCL   16 CLD
"""
from __future__ import annotations

import numpy as np

from .errors import DataError
from .raster import Raster

CHANNEL_NAMES = (
    "NDVI", "NDWI", "B02", "B03", "B04", "B05", "B06", "B07", "B08", "B8A",
    "B11", "B12", "B02E", "B03E", "B04E", "SCL", "CLD",
)
CATALOG_SIZE = len(CHANNEL_NAMES)

BAND_SELECTIONS = {
    "4B": (2, 3, 4, 8),
    "7B": (0, 1, 12, 13, 14, 8, 15),
    "10B": (2, 3, 4, 5, 6, 7, 8, 9, 10, 11),
}

SCL_CODES = 11  # Sen2Cor scene-classification codelist spans 0..11


def selection_indices(name: str) -> tuple[int, ...]:
    try:
        return BAND_SELECTIONS[name]
    except KeyError:
        raise DataError(f"unknown band selection {name!r}; "
                        f"choose from {sorted(BAND_SELECTIONS)}") from None


def selection_names(name: str) -> tuple[str, ...]:
    return tuple(CHANNEL_NAMES[i] for i in selection_indices(name))


def _normalized_difference(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DataError(f"band shapes differ: {a.shape} vs {b.shape}")
    num = a.astype(np.float64) - b.astype(np.float64)
    den = a.astype(np.float64) + b.astype(np.float64)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den != 0)  # zero where both bands vanish
    return out.astype(np.float32)


def ndvi(b08, b04):
    """Normalized difference vegetation index (B08 - B04) / (B08 + B04)."""
    return _normalized_difference(b08, b04)


def ndwi(b03, b08):
    """Normalized difference water index (B03 - B08) / (B03 + B08)."""
    return _normalized_difference(b03, b08)


def select_bands(sat: Raster, selection: str) -> Raster:
    """Extract a named band selection, in selection order, from a full
    17-channel raster."""
    if sat.bands != CATALOG_SIZE:
        raise DataError(
            f"band selection needs the {CATALOG_SIZE}-channel catalog, "
            f"got {sat.bands} bands")
    idx = list(selection_indices(selection))
    return Raster(data=sat.data[idx].copy(), transform=sat.transform,
                  crs=sat.crs, nodata=sat.nodata)


def normalize_band(name: str, values: np.ndarray) -> np.ndarray:
    """Scale one satellite band to its training range.

    Index bands clip to [-1, 1]; SCL codes scale by 1/11; cloud probability
    scales by 1/100; reflectance-like bands clip to [0, 1].
    """
    values = np.asarray(values, dtype=np.float32)
    if name in ("NDVI", "NDWI"):
        return np.clip(values, -1.0, 1.0)
    if name == "SCL":
        return np.clip(values / float(SCL_CODES), 0.0, 1.0)
    if name == "CLD":
        return np.clip(values / 100.0, 0.0, 1.0)
    return np.clip(values, 0.0, 1.0)
