"""Tiling of aligned aerial/label parents and satellite window cropping."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .raster import Raster


@dataclass
class TileRecord:
    aerial: Raster
    label: Raster
    row: int
    col: int


def tile_aerial(image: Raster, label: Raster, tile=512) -> list[TileRecord]:
    """Slice an aligned (image, label) parent into non-overlapping row-major
    tiles of `tile` px; partial edge tiles are dropped. Each tile carries a
    geotransform shifted to its own origin."""
    if tile < 1:
        raise DataError("tile size must be positive")
    if not image.same_grid(label):
        raise DataError("image and label are not aligned "
                        "(size, geotransform, and CRS must match)")
    n_rows = image.height // tile
    n_cols = image.width // tile
    tiles = []
    for r in range(n_rows):
        for c in range(n_cols):
            win = (c * tile, r * tile, (c + 1) * tile, (r + 1) * tile)
            tiles.append(TileRecord(
                aerial=image.window(*win),
                label=label.window(*win),
                row=r, col=c,
            ))
    return tiles


def crop_satellite(sat: Raster, bounds, out_size=26) -> Raster:
    """Read the pixel window covering `bounds` (xmin, ymin, xmax, ymax) and
    nearest-resample it to out_size x out_size.

    The window expands outward to whole pixels, so the result covers the
    requested bounds to within one satellite pixel, and resampling only ever
    copies source values. The satellite raster must already share the CRS of
    the bounds.
    """
    if out_size < 1:
        raise DataError("output size must be positive")
    xmin, ymin, xmax, ymax = bounds
    if not (xmin < xmax and ymin < ymax):
        raise DataError(f"degenerate bounds {bounds}")
    corners = [sat.world_to_pixel(x, y) for x in (xmin, xmax) for y in (ymin, ymax)]
    cols = [c for c, _ in corners]
    rows = [r for _, r in corners]
    col0 = max(0, math.floor(min(cols)))
    col1 = min(sat.width, math.ceil(max(cols)))
    row0 = max(0, math.floor(min(rows)))
    row1 = min(sat.height, math.ceil(max(rows)))
    if col0 >= col1 or row0 >= row1:
        raise DataError(f"bounds {bounds} do not intersect the satellite raster")
    window = sat.window(col0, row0, col1, row1)
    if sat.nodata is not None and np.all(window.data == sat.nodata):
        raise DataError("satellite window contains only nodata")
    h, w = window.height, window.width
    src_r = (np.arange(out_size) * h) // out_size
    src_c = (np.arange(out_size) * w) // out_size
    data = window.data[:, src_r[:, None], src_c[None, :]].copy()
    ox, oy, pw, ph = window.transform
    return Raster(
        data=data,
        transform=(ox, oy, pw * w / out_size, ph * h / out_size),
        crs=sat.crs,
        nodata=sat.nodata,
    )
