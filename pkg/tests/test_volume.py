import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxtrace.volume import (ScalarVolume, gradient, load_volume,
                             make_synthetic_volume, sample_trilinear,
                             save_volume)


def _write_raw_volume(tmp_path, raw, dims, dtype, spacing=(1.0, 1.0, 1.0)):
    raw_path = tmp_path / "vol.raw"
    np.asarray(raw).astype(dtype).tofile(raw_path)
    desc = {
        "dims": list(dims), "spacing_mm": list(spacing),
        "origin_mm": [0.0, 0.0, 0.0], "dtype": {np.uint8: "u8",
                                                np.uint16: "u16",
                                                np.float32: "f32"}[dtype],
        "endianness": "little", "data_file": "vol.raw",
    }
    path = tmp_path / "vol.volume.json"
    path.write_text(json.dumps(desc))
    return path


def test_load_constant_volume_maps_to_zero(tmp_path):
    path = _write_raw_volume(tmp_path, np.full(8, 100), (2, 2, 2), np.uint8)
    vol = load_volume(path)
    assert np.all(vol.data == 0.0)
    assert vol.value_range == (100.0, 100.0)


def test_load_normalizes_endpoints(tmp_path):
    raw = np.zeros(8, dtype=np.uint8)
    raw[3] = 255
    path = _write_raw_volume(tmp_path, raw, (2, 2, 2), np.uint8)
    vol = load_volume(path)
    assert vol.data.min() == 0.0 and vol.data.max() == 1.0
    assert vol.value_range == (0.0, 255.0)


def test_load_size_mismatch(tmp_path):
    path = _write_raw_volume(tmp_path, np.zeros(63), (4, 4, 4), np.float32)
    with pytest.raises(ValueError, match="size mismatch"):
        load_volume(path)


def test_load_rejects_bad_descriptor(tmp_path):
    path = _write_raw_volume(tmp_path, np.zeros(8), (2, 2, 2), np.float32)
    desc = json.loads(path.read_text())
    desc["spacing_mm"] = [1.0, 0.0, 1.0]
    path.write_text(json.dumps(desc))
    with pytest.raises(ValueError, match="spacing"):
        load_volume(path)
    desc["spacing_mm"] = [1.0, 1.0, 1.0]
    desc["dtype"] = "i32"
    path.write_text(json.dumps(desc))
    with pytest.raises(ValueError, match="unsupported"):
        load_volume(path)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_volume(tmp_path / "absent.volume.json")


def test_roundtrip_bit_identical(tmp_path):
    raw = (np.arange(4 * 3 * 5) % 17).astype(np.uint16)
    src = _write_raw_volume(tmp_path, raw, (4, 3, 5), np.uint16,
                            spacing=(0.5, 1.0, 2.0))
    vol = load_volume(src)
    save_volume(vol, tmp_path / "copy.volume.json")
    vol2 = load_volume(tmp_path / "copy.volume.json")
    assert np.array_equal(vol.data, vol2.data)
    assert vol2.dims == vol.dims and vol2.spacing == vol.spacing
    save_volume(vol2, tmp_path / "copy2.volume.json")
    vol3 = load_volume(tmp_path / "copy2.volume.json")
    assert np.array_equal(vol.data, vol3.data)


def test_trilinear_reproduces_voxel_centers():
    vol = make_synthetic_volume("ramp", (8, 4, 4), (1.0, 1.0, 1.0))
    assert sample_trilinear(vol, (3.0, 2.0, 1.0)) == vol.data[1, 2, 3]
    data = vol.data.copy()
    data[1, 1, 2] = 0.7
    vol2 = ScalarVolume(vol.dims, vol.spacing, vol.origin, data,
                        (0.0, 1.0))
    assert sample_trilinear(vol2, (2.0, 1.0, 1.0)) == 0.7


def test_trilinear_midpoint_between_voxels():
    data = np.zeros((2, 2, 2))
    data[:, :, 1] = 1.0  # planes x=0 -> 0, x=1 -> 1
    vol = ScalarVolume((2, 2, 2), (1.0, 1.0, 1.0), (0.0, 0.0, 0.0), data,
                       (0.0, 1.0))
    assert sample_trilinear(vol, (0.5, 0.5, 0.5)) == 0.5


def test_trilinear_outside_is_zero():
    vol = make_synthetic_volume("sphere", (8, 8, 8), (1.0, 1.0, 1.0))
    assert sample_trilinear(vol, (-0.5, 3.0, 3.0)) == 0.0
    assert sample_trilinear(vol, (3.0, 3.0, 7.2)) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.tuples(*[st.floats(-0.02, 0.02) for _ in range(3)]),
       st.floats(0.2, 0.8),
       st.tuples(*[st.floats(0.05, 0.9) for _ in range(3)]))
def test_trilinear_exact_for_affine_fields(coeffs, const, frac):
    # affine fields are reproduced exactly at interior points
    dims, spacing = (6, 5, 7), (0.8, 1.2, 0.6)
    x = np.arange(6) * spacing[0]
    y = np.arange(5) * spacing[1]
    z = np.arange(7) * spacing[2]
    zz, yy, xx = np.meshgrid(z, y, x, indexing="ij")
    a, b, c = coeffs
    data = const + a * xx + b * yy + c * zz
    vol = ScalarVolume(dims, spacing, (0.0, 0.0, 0.0), data,
                       (float(data.min()), float(data.max())))
    lo, hi = vol.bbox
    p = lo + np.asarray(frac) * (hi - lo)
    expected = const + a * p[0] + b * p[1] + c * p[2]
    assert sample_trilinear(vol, p) == pytest.approx(expected, rel=1e-6, abs=1e-9)


def test_trilinear_bounded_by_support():
    rs = np.random.RandomState(3)
    data = rs.rand(5, 5, 5)
    vol = ScalarVolume((5, 5, 5), (1.0, 1.0, 1.0), (0.0, 0.0, 0.0), data,
                       (0.0, 1.0))
    pts = rs.rand(500, 3) * 4.0
    vals = sample_trilinear(vol, pts)
    i0 = np.floor(pts).astype(int)
    for k in range(500):
        iz, iy, ix = i0[k, 2], i0[k, 1], i0[k, 0]
        block = data[iz:iz + 2, iy:iy + 2, ix:ix + 2]
        assert block.min() - 1e-12 <= vals[k] <= block.max() + 1e-12


def test_gradient_of_ramp():
    vol = make_synthetic_volume("ramp", (32, 8, 8), (1.0, 1.0, 1.0))
    extent = 31.0
    pts = np.array([[10.3, 3.5, 3.5], [20.0, 4.0, 2.5], [5.5, 2.2, 5.0]])
    g = gradient(vol, pts)
    assert np.allclose(g[:, 0], 1.0 / extent, rtol=1e-6)
    assert np.allclose(g[:, 1:], 0.0, atol=1e-9 / extent)


def test_gradient_constant_and_outside():
    data = np.full((4, 4, 4), 0.0)
    vol = ScalarVolume((4, 4, 4), (1.0, 1.0, 1.0), (0.0, 0.0, 0.0), data,
                       (5.0, 5.0))
    assert np.all(gradient(vol, (1.5, 1.5, 1.5)) == 0.0)
    assert np.all(gradient(vol, (-3.0, 1.0, 1.0)) == 0.0)


def test_synthetic_sphere_values():
    vol = make_synthetic_volume("sphere", (32, 32, 32), (1.0, 1.0, 1.0))
    assert vol.data[16, 16, 16] == 1.0  # center voxel well inside the radius
    assert vol.data[0, 0, 0] == 0.0
    assert vol.data.min() == 0.0 and vol.data.max() == 1.0


def test_synthetic_kinds_and_errors():
    for kind in ("sphere", "ramp", "shell", "two-spheres", "slab"):
        vol = make_synthetic_volume(kind, (8, 8, 8), (1.0, 1.0, 1.0))
        assert vol.data.min() >= 0.0 and vol.data.max() <= 1.0
    with pytest.raises(ValueError):
        make_synthetic_volume("sphere", (1, 8, 8), (1.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        make_synthetic_volume("wat", (8, 8, 8), (1.0, 1.0, 1.0))


def test_synthetic_roundtrip_is_bit_identical(tmp_path):
    vol = make_synthetic_volume("shell", (12, 10, 9), (0.7, 1.0, 1.3))
    save_volume(vol, tmp_path / "s.volume.json")
    vol2 = load_volume(tmp_path / "s.volume.json")
    assert np.array_equal(vol.data, vol2.data)
