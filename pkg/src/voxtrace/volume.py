"""Scalar voxel volumes: storage, descriptor I/O, interpolation, gradients.

A volume is a dense grid of scalars normalized to [0, 1], with physical
spacing in millimeters. Voxel (i, j, k) is centered at
origin + (i*sx, j*sy, k*sz); the bounding box spans the outermost voxel
centers, so trilinear interpolation always has eight real neighbors.
Points outside the box sample to 0 (vacuum outside the scan).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_DTYPES = {
    "u8": np.dtype("<u1"),
    "u16": np.dtype("<u2"),
    "f32": np.dtype("<f4"),
    "f64": np.dtype("<f8"),
}

SYNTHETIC_KINDS = ("sphere", "ramp", "shell", "two-spheres", "slab")


@dataclass(frozen=True)
class ScalarVolume:
    """Dense scalar grid; `data` is indexed [z, y, x] so x varies fastest."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    data: np.ndarray
    value_range: tuple[float, float]

    def __post_init__(self):
        nx, ny, nz = self.dims
        if min(nx, ny, nz) < 2:
            raise ValueError(f"dims must be >= 2 per axis, got {self.dims}")
        if min(self.spacing) <= 0:
            raise ValueError(f"spacing must be > 0 per axis, got {self.spacing}")
        if self.data.shape != (nz, ny, nx):
            raise ValueError(
                f"data shape {self.data.shape} does not match dims {self.dims}")
        if self.data.dtype != np.float64:
            raise ValueError("data must be float64")
        lo = float(self.data.min())
        hi = float(self.data.max())
        if not (np.isfinite(lo) and np.isfinite(hi)) or lo < 0.0 or hi > 1.0:
            raise ValueError("normalized samples must lie in [0, 1]")

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.asarray(self.origin, dtype=np.float64)
        ext = (np.asarray(self.dims, dtype=np.float64) - 1.0) * np.asarray(self.spacing)
        return lo, lo + ext


def _normalize(raw: np.ndarray) -> tuple[np.ndarray, tuple[float, float]]:
    raw64 = raw.astype(np.float64)
    lo = float(raw64.min())
    hi = float(raw64.max())
    if hi == lo:
        # degenerate source range: everything maps to 0
        return np.zeros_like(raw64), (lo, hi)
    return (raw64 - lo) / (hi - lo), (lo, hi)


def load_volume(path) -> ScalarVolume:
    """Load a volume from a JSON descriptor plus raw little-endian data file.

    Descriptor fields: dims, spacing_mm, origin_mm, dtype (u8|u16|f32|f64),
    endianness ("little"), data_file (relative to the descriptor).
    """
    path = Path(path)
    with open(path) as f:
        desc = json.load(f)
    dims = tuple(int(d) for d in desc["dims"])
    spacing = tuple(float(s) for s in desc["spacing_mm"])
    origin = tuple(float(o) for o in desc.get("origin_mm", (0.0, 0.0, 0.0)))
    dtype_name = desc["dtype"]
    if dtype_name not in _DTYPES:
        raise ValueError(f"unsupported sample type {dtype_name!r}")
    if desc.get("endianness", "little") != "little":
        raise ValueError("only little-endian data is supported")
    if min(spacing) <= 0:
        raise ValueError(f"non-positive spacing in descriptor: {spacing}")

    raw_path = path.parent / desc["data_file"]
    raw = np.fromfile(raw_path, dtype=_DTYPES[dtype_name])
    nx, ny, nz = dims
    if raw.size != nx * ny * nz:
        raise ValueError(
            f"data size mismatch: descriptor says {nx * ny * nz} samples, "
            f"file holds {raw.size}")
    data, value_range = _normalize(raw.reshape(nz, ny, nx))
    return ScalarVolume(dims, spacing, origin, data, value_range)


def save_volume(vol: ScalarVolume, path) -> None:
    """Write descriptor + raw pair; the normalized array is stored as f64."""
    path = Path(path)
    raw_name = path.stem.replace(".volume", "") + ".raw"
    desc = {
        "dims": list(vol.dims),
        "spacing_mm": list(vol.spacing),
        "origin_mm": list(vol.origin),
        "dtype": "f64",
        "endianness": "little",
        "data_file": raw_name,
    }
    with open(path, "w") as f:
        json.dump(desc, f, indent=2, sort_keys=True)
        f.write("\n")
    vol.data.astype("<f8").tofile(path.parent / raw_name)


def _as_points(p) -> tuple[np.ndarray, bool]:
    pts = np.asarray(p, dtype=np.float64)
    if pts.ndim == 1:
        return pts.reshape(1, 3), True
    return pts, False


def sample_trilinear(vol: ScalarVolume, p):
    """Trilinear interpolation at world point(s); 0 outside the bounding box.

    Accepts one (3,) point or an (N, 3) array.
    """
    pts, scalar = _as_points(p)
    lo, hi = vol.bbox
    q = (pts - lo) / np.asarray(vol.spacing, dtype=np.float64)
    nx, ny, nz = vol.dims
    nmax = np.array([nx - 1, ny - 1, nz - 1], dtype=np.float64)
    inside = np.all((q >= 0.0) & (q <= nmax), axis=1)

    out = np.zeros(len(pts), dtype=np.float64)
    if inside.any():
        qi = q[inside]
        i0 = np.floor(qi).astype(np.int64)
        i0 = np.minimum(i0, np.array([nx - 2, ny - 2, nz - 2]))
        i0 = np.maximum(i0, 0)
        f = qi - i0
        ix, iy, iz = i0[:, 0], i0[:, 1], i0[:, 2]
        fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
        d = vol.data
        c00 = d[iz, iy, ix] * (1 - fx) + d[iz, iy, ix + 1] * fx
        c10 = d[iz, iy + 1, ix] * (1 - fx) + d[iz, iy + 1, ix + 1] * fx
        c01 = d[iz + 1, iy, ix] * (1 - fx) + d[iz + 1, iy, ix + 1] * fx
        c11 = d[iz + 1, iy + 1, ix] * (1 - fx) + d[iz + 1, iy + 1, ix + 1] * fx
        c0 = c00 * (1 - fy) + c10 * fy
        c1 = c01 * (1 - fy) + c11 * fy
        out[inside] = c0 * (1 - fz) + c1 * fz
    return float(out[0]) if scalar else out


def gradient(vol: ScalarVolume, p):
    """Central-difference gradient (per mm) with step = half the spacing.

    Differences are taken on sample_trilinear, so the zero-outside rule
    applies; points outside the box return the zero vector.
    """
    pts, scalar = _as_points(p)
    lo, hi = vol.bbox
    inside = np.all((pts >= lo) & (pts <= hi), axis=1)
    grad = np.zeros((len(pts), 3), dtype=np.float64)
    if inside.any():
        pi = pts[inside]
        for axis in range(3):
            h = vol.spacing[axis] * 0.5
            step = np.zeros(3)
            step[axis] = h
            fp = sample_trilinear(vol, pi + step)
            fm = sample_trilinear(vol, pi - step)
            grad[inside, axis] = (np.atleast_1d(fp) - np.atleast_1d(fm)) / (2.0 * h)
    return grad[0] if scalar else grad


def make_synthetic_volume(kind: str, dims, spacing, origin=(0.0, 0.0, 0.0)) -> ScalarVolume:
    """Deterministic analytic test fields sampled at voxel centers.

    Kinds: sphere (1 inside, 0 outside, 2-voxel falloff band), ramp
    (x / x-extent), shell (thin spherical shell), two-spheres, slab
    (ones on interior x-slices, zero on the first and last slice).
    """
    dims = tuple(int(d) for d in dims)
    spacing = tuple(float(s) for s in spacing)
    nx, ny, nz = dims
    if min(dims) < 2:
        raise ValueError(f"dims must be >= 2 per axis, got {dims}")
    if kind not in SYNTHETIC_KINDS:
        raise ValueError(f"unknown synthetic kind {kind!r}")

    sx, sy, sz = spacing
    x = np.arange(nx) * sx
    y = np.arange(ny) * sy
    z = np.arange(nz) * sz
    zz, yy, xx = np.meshgrid(z, y, x, indexing="ij")
    extent = np.array([(nx - 1) * sx, (ny - 1) * sy, (nz - 1) * sz])
    center = extent / 2.0
    band = 2.0 * float(np.mean(spacing))

    if kind == "ramp":
        data = xx / extent[0]
    elif kind == "slab":
        data = np.ones((nz, ny, nx))
        data[:, :, 0] = 0.0
        data[:, :, -1] = 0.0
    else:
        def blob(cx, cy, cz, radius):
            r = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2 + (zz - cz) ** 2)
            return np.clip((radius - r) / band, 0.0, 1.0)

        radius = 0.35 * float(extent.min())
        if kind == "sphere":
            data = blob(*center, radius)
        elif kind == "shell":
            r = np.sqrt((xx - center[0]) ** 2 + (yy - center[1]) ** 2
                        + (zz - center[2]) ** 2)
            data = np.clip(1.0 - np.abs(r - radius) / band, 0.0, 1.0)
        else:  # two-spheres
            off = 0.25 * extent[0]
            r_small = 0.18 * float(extent.min())
            a = blob(center[0] - off, center[1], center[2], r_small)
            b = blob(center[0] + off, center[1], center[2], r_small)
            data = np.maximum(a, b)

    data = np.ascontiguousarray(data, dtype=np.float64)
    # attain 1.0 exactly so save -> load never rescales
    peak = float(data.max())
    if peak not in (0.0, 1.0):
        data = data / peak
    return ScalarVolume(dims, spacing, tuple(float(o) for o in origin), data,
                        (float(data.min()), float(data.max())))
