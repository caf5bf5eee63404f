"""In-memory raster container with affine georeferencing, plus the RSTX
interchange format.

A raster is a (bands, height, width) array with an affine geotransform
(origin_x, origin_y, pixel_w, pixel_h) mapping pixel corners to world
coordinates: world_x = origin_x + col * pixel_w, world_y = origin_y +
row * pixel_h. pixel_h is normally negative for north-up grids.

RSTX layout: magic ``RSTX1``, little-endian uint32 header length, UTF-8 JSON
header {bands, width, height, dtype: "f32"|"u8", geotransform: [ox, oy, pw,
ph], crs, nodata}, then the band-major little-endian pixel payload. Round
trips are bit-exact.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError

RSTX_MAGIC = b"RSTX1"

_DTYPE_NAMES = {np.dtype(np.float32): "f32", np.dtype(np.uint8): "u8"}
_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("u1")}


@dataclass
class Raster:
    """Multiband grid with an affine geotransform and a CRS identity."""

    data: np.ndarray
    transform: tuple[float, float, float, float]
    crs: int
    nodata: float | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise DataError(f"raster data must be (bands, height, width), "
                            f"got {self.data.shape}")
        if self.data.dtype not in _DTYPE_NAMES:
            raise DataError(f"unsupported raster dtype {self.data.dtype}; "
                            f"use float32 or uint8")
        if len(self.transform) != 4:
            raise DataError("geotransform must be (ox, oy, pw, ph)")
        self.transform = tuple(float(v) for v in self.transform)
        if self.transform[2] == 0 or self.transform[3] == 0:
            raise DataError("geotransform pixel sizes must be nonzero")

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def pixel_to_world(self, col, row):
        ox, oy, pw, ph = self.transform
        return ox + col * pw, oy + row * ph

    def world_to_pixel(self, x, y):
        ox, oy, pw, ph = self.transform
        return (x - ox) / pw, (y - oy) / ph

    def bounds(self):
        """(xmin, ymin, xmax, ymax) covered by the full grid."""
        x0, y0 = self.pixel_to_world(0, 0)
        x1, y1 = self.pixel_to_world(self.width, self.height)
        return min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1)

    def window(self, col0, row0, col1, row1) -> "Raster":
        """Copy of the half-open pixel window with a shifted origin."""
        if not (0 <= col0 < col1 <= self.width and 0 <= row0 < row1 <= self.height):
            raise DataError(f"window ({col0}:{col1}, {row0}:{row1}) outside raster "
                            f"({self.width} x {self.height})")
        ox, oy = self.pixel_to_world(col0, row0)
        return replace(self, data=self.data[:, row0:row1, col0:col1].copy(),
                       transform=(ox, oy, self.transform[2], self.transform[3]))

    def same_grid(self, other: "Raster") -> bool:
        return (self.data.shape[1:] == other.data.shape[1:]
                and self.transform == other.transform
                and self.crs == other.crs)


def write_rstx(path, raster: Raster):
    name = _DTYPE_NAMES[raster.data.dtype]
    header = {
        "bands": raster.bands,
        "width": raster.width,
        "height": raster.height,
        "dtype": name,
        "geotransform": list(raster.transform),
        "crs": int(raster.crs),
        "nodata": None if raster.nodata is None else float(raster.nodata),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = np.ascontiguousarray(raster.data).astype(_DTYPES[name], copy=False)
    with open(path, "wb") as f:
        f.write(RSTX_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(payload.tobytes())


def read_rstx(path) -> Raster:
    with open(path, "rb") as f:
        magic = f.read(len(RSTX_MAGIC))
        if magic != RSTX_MAGIC:
            raise DataError(f"{path} is not an RSTX raster")
        (length,) = struct.unpack("<I", f.read(4))
        try:
            header = json.loads(f.read(length).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise DataError(f"corrupt RSTX header in {path}: {e}") from None
        try:
            dtype = _DTYPES[header["dtype"]]
            shape = (header["bands"], header["height"], header["width"])
            transform = tuple(header["geotransform"])
            crs = int(header["crs"])
            nodata = header["nodata"]
        except (KeyError, TypeError) as e:
            raise DataError(f"incomplete RSTX header in {path}: {e}") from None
        count = int(np.prod(shape, dtype=np.int64))
        raw = f.read(count * dtype.itemsize)
        if len(raw) != count * dtype.itemsize:
            raise DataError(f"truncated RSTX payload in {path}")
        data = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    if dtype == _DTYPES["f32"]:
        data = data.astype(np.float32, copy=False)
    return Raster(data=data, transform=transform, crs=crs, nodata=nodata)
