import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from difd.errors import DataError
from difd.raster import Raster, read_rstx, write_rstx


def _raster(dtype=np.float32, nodata=None, shape=(3, 5, 4)):
    rng = np.random.default_rng(0)
    if dtype == np.uint8:
        data = rng.integers(0, 255, size=shape).astype(np.uint8)
    else:
        data = rng.standard_normal(shape).astype(np.float32)
    return Raster(data, (1000.0, 2000.0, 0.5, -0.5), crs=2180, nodata=nodata)


class TestRaster:
    def test_shape_properties(self):
        r = _raster()
        assert (r.bands, r.height, r.width) == (3, 5, 4)

    def test_rejects_bad_dtype(self):
        with pytest.raises(DataError):
            Raster(np.zeros((1, 2, 2), dtype=np.int32), (0, 0, 1, -1), 2180)

    def test_rejects_zero_pixel_size(self):
        with pytest.raises(DataError):
            Raster(np.zeros((1, 2, 2), np.float32), (0, 0, 0, -1), 2180)

    def test_world_pixel_round_trip(self):
        r = _raster()
        for col, row in [(0, 0), (3.25, 4.75), (4, 5)]:
            x, y = r.pixel_to_world(col, row)
            c2, r2 = r.world_to_pixel(x, y)
            assert abs(c2 - col) <= 1e-9 and abs(r2 - row) <= 1e-9

    def test_bounds_are_normalized(self):
        r = _raster()
        xmin, ymin, xmax, ymax = r.bounds()
        assert xmin < xmax and ymin < ymax
        assert xmin == 1000.0 and xmax == 1000.0 + 4 * 0.5
        assert ymax == 2000.0 and ymin == 2000.0 - 5 * 0.5

    def test_window_shifts_origin(self):
        r = _raster()
        w = r.window(1, 2, 4, 5)
        assert w.data.shape == (3, 3, 3)
        assert w.transform[:2] == r.pixel_to_world(1, 2)
        np.testing.assert_array_equal(w.data, r.data[:, 2:5, 1:4])

    def test_window_outside_rejected(self):
        with pytest.raises(DataError):
            _raster().window(0, 0, 9, 9)


class TestRstx:
    @pytest.mark.parametrize("dtype,nodata", [
        (np.float32, None), (np.float32, -9999.0), (np.uint8, 0.0),
    ])
    def test_round_trip_bit_exact(self, tmp_path, dtype, nodata):
        r = _raster(dtype=dtype, nodata=nodata)
        path = tmp_path / "r.rstx"
        write_rstx(path, r)
        back = read_rstx(path)
        assert back.data.dtype == r.data.dtype
        np.testing.assert_array_equal(back.data, r.data)
        assert back.transform == r.transform
        assert back.crs == r.crs
        assert back.nodata == r.nodata
        # a second write of the reread raster is byte-identical
        path2 = tmp_path / "r2.rstx"
        write_rstx(path2, back)
        assert path.read_bytes() == path2.read_bytes()

    def test_magic_checked(self, tmp_path):
        path = tmp_path / "bad.rstx"
        path.write_bytes(b"NOPE1" + b"\x00" * 32)
        with pytest.raises(DataError):
            read_rstx(path)

    def test_truncated_payload_rejected(self, tmp_path):
        r = _raster()
        path = tmp_path / "r.rstx"
        write_rstx(path, r)
        blob = path.read_bytes()
        (tmp_path / "short.rstx").write_bytes(blob[:-8])
        with pytest.raises(DataError):
            read_rstx(tmp_path / "short.rstx")

    @given(seed=st.integers(0, 2**16), bands=st.integers(1, 4),
           h=st.integers(1, 6), w=st.integers(1, 6))
    @settings(max_examples=25, deadline=None)
    def test_round_trip_property(self, seed, bands, h, w):
        rng = np.random.default_rng(seed)
        r = Raster(rng.standard_normal((bands, h, w)).astype(np.float32),
                   (rng.uniform(-1e5, 1e5), rng.uniform(-1e5, 1e5), 0.25, -0.25),
                   crs=4326)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "p.rstx"
            write_rstx(path, r)
            back = read_rstx(path)
        np.testing.assert_array_equal(back.data, r.data)
        assert back.transform == r.transform
