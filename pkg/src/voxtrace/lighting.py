"""HDR environment lighting with exact lookup and importance sampling.

Lat-long parameterization: theta = acos(dir.z) maps to rows (row 0 at
the +z pole), phi = atan2(dir.y, dir.x) to columns. Evaluation is
nearest-texel so the sampling pdf and the looked-up radiance stay
exactly consistent. Row selection is weighted by luminance times
sin(latitude); because a lat-long texel's solid angle is itself
proportional to sin(latitude), a constant map samples the sphere
exactly uniformly.
"""

from __future__ import annotations

import numpy as np

from . import pfm
from .optics import LUMA


class EnvironmentLight:
    """Lat-long radiance map plus inverse-CDF tables for sampling."""

    def __init__(self, radiance: np.ndarray):
        radiance = np.ascontiguousarray(radiance, dtype=np.float32)
        if radiance.ndim != 3 or radiance.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) radiance, got {radiance.shape}")
        if not np.isfinite(radiance).all():
            raise ValueError("radiance must be finite")
        if radiance.min() < 0:
            raise ValueError("radiance must be >= 0")
        self.radiance = radiance
        self.height, self.width = radiance.shape[:2]
        h, w = self.height, self.width

        theta_edges = np.pi * np.arange(h + 1) / h
        self._cos_edges = np.cos(theta_edges)            # (h+1,) decreasing
        sin_center = np.sin(np.pi * (np.arange(h) + 0.5) / h)
        # solid angle per texel of row r: (2pi/w) * (cos edge drop)
        self._texel_omega = (2.0 * np.pi / w) * (self._cos_edges[:-1]
                                                 - self._cos_edges[1:])

        lum = radiance.astype(np.float64) @ LUMA          # (h, w)
        self._lum = lum
        row_w = lum.sum(axis=1) * sin_center
        self.total_weight = float(row_w.sum())

        if self.total_weight > 0:
            self.marginal_cdf = np.cumsum(row_w) / self.total_weight
            self.marginal_cdf[-1] = 1.0
        else:
            self.marginal_cdf = np.linspace(1.0 / h, 1.0, h)

        cond = np.cumsum(lum, axis=1)
        row_tot = cond[:, -1:].copy()
        zero_rows = row_tot[:, 0] == 0.0
        cond = np.where(zero_rows[:, None],
                        np.tile(np.arange(1, w + 1, dtype=np.float64), (h, 1)) / w,
                        cond / np.where(row_tot == 0.0, 1.0, row_tot))
        cond[:, -1] = 1.0
        self.conditional_cdf = cond

        # weight of each texel under the sampling distribution
        self._texel_prob = (lum * sin_center[:, None]) / self.total_weight \
            if self.total_weight > 0 else np.zeros_like(lum)
        self._key = None

    def key_light(self) -> tuple[np.ndarray, np.ndarray]:
        """Direction and radiance of the brightest texel (deterministic)."""
        if self._key is None:
            r, c = np.unravel_index(int(np.argmax(self._lum)), self._lum.shape)
            theta = np.pi * (r + 0.5) / self.height
            phi = 2.0 * np.pi * (c + 0.5) / self.width
            d = np.array([np.sin(theta) * np.cos(phi),
                          np.sin(theta) * np.sin(phi),
                          np.cos(theta)])
            self._key = (d, self.radiance[r, c].astype(np.float64))
        return self._key


def _dir_to_texel(env: EnvironmentLight, dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    z = np.clip(dirs[:, 2], -1.0, 1.0)
    theta = np.arccos(z)
    phi = np.arctan2(dirs[:, 1], dirs[:, 0])
    phi = np.where(phi < 0.0, phi + 2.0 * np.pi, phi)
    r = np.clip((theta / np.pi * env.height).astype(np.int64), 0, env.height - 1)
    c = np.clip((phi / (2.0 * np.pi) * env.width).astype(np.int64), 0, env.width - 1)
    return r, c


def env_eval(env: EnvironmentLight, direction):
    """Nearest-texel radiance in a unit direction (batch-friendly)."""
    d = np.asarray(direction, dtype=np.float64)
    single = d.ndim == 1
    d2 = np.atleast_2d(d)
    r, c = _dir_to_texel(env, d2)
    out = env.radiance[r, c].astype(np.float64)
    return out[0] if single else out


def env_pdf(env: EnvironmentLight, direction):
    """Sampling density (per steradian) env_sample would assign to direction."""
    d2 = np.atleast_2d(np.asarray(direction, dtype=np.float64))
    r, c = _dir_to_texel(env, d2)
    pdf = env._texel_prob[r, c] / env._texel_omega[r]
    return float(pdf[0]) if np.ndim(direction) == 1 else pdf


def env_sample(env: EnvironmentLight, u1, u2):
    """Importance-sample a direction proportional to luminance x sin(latitude).

    Returns (direction, radiance, pdf). The unit square (u1, u2) is
    mapped measure-preservingly: u1 picks the row then refines cos(theta)
    within it, u2 picks the column then the azimuth within the texel.
    """
    if env.total_weight <= 0.0:
        raise ValueError("cannot sample an identically zero environment")
    u1 = np.asarray(u1, dtype=np.float64)
    single = u1.ndim == 0
    u1 = np.atleast_1d(u1)
    u2 = np.atleast_1d(np.asarray(u2, dtype=np.float64))

    r = np.clip(np.searchsorted(env.marginal_cdf, u1, side="right"),
                0, env.height - 1)
    cdf_lo = np.where(r > 0, env.marginal_cdf[r - 1], 0.0)
    u1r = (u1 - cdf_lo) / (env.marginal_cdf[r] - cdf_lo)

    cond = env.conditional_cdf[r]
    c = np.clip(_searchsorted_rows(cond, u2), 0, env.width - 1)
    cdf_lo_c = np.where(c > 0, cond[np.arange(len(r)), c - 1], 0.0)
    u2r = (u2 - cdf_lo_c) / (cond[np.arange(len(r)), c] - cdf_lo_c)

    cos_top = env._cos_edges[r]
    cos_bot = env._cos_edges[r + 1]
    cos_theta = cos_top + u1r * (cos_bot - cos_top)
    sin_theta = np.sqrt(np.maximum(0.0, 1.0 - cos_theta * cos_theta))
    phi = 2.0 * np.pi * (c + u2r) / env.width
    d = np.stack([sin_theta * np.cos(phi), sin_theta * np.sin(phi), cos_theta],
                 axis=1)

    pdf = env._texel_prob[r, c] / env._texel_omega[r]
    rad = env_eval(env, d)
    if single:
        return d[0], rad[0], float(pdf[0])
    return d, rad, pdf


def _searchsorted_rows(cdf_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    # per-row searchsorted: count entries <= u (side="right")
    return (cdf_rows <= u[:, None]).sum(axis=1)


def make_synthetic_env(kind: str, width: int = 64, height: int = 32,
                       params: dict | None = None) -> EnvironmentLight:
    """Deterministic analytic environments: constant, three-point, sun-sky."""
    params = dict(params or {})
    if width < 1 or height < 1:
        raise ValueError("environment resolution must be >= 1")
    theta = np.pi * (np.arange(height) + 0.5) / height
    phi = 2.0 * np.pi * (np.arange(width) + 0.5) / width
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    dirs = np.stack([np.sin(tt) * np.cos(pp), np.sin(tt) * np.sin(pp),
                     np.cos(tt)], axis=2)

    def lobe(center, rgb, sigma):
        center = np.asarray(center, dtype=np.float64)
        center = center / np.linalg.norm(center)
        ang = np.arccos(np.clip(dirs @ center, -1.0, 1.0))
        return np.exp(-0.5 * (ang / sigma) ** 2)[..., None] * np.asarray(rgb)

    if kind == "constant":
        intensity = np.asarray(params.get("intensity", (1.0, 1.0, 1.0)),
                               dtype=np.float64)
        if np.isscalar(params.get("intensity")) :
            intensity = np.full(3, float(params["intensity"]))
        if intensity.min() < 0:
            raise ValueError("intensity must be >= 0")
        img = np.tile(intensity, (height, width, 1))
    elif kind == "three-point":
        lights = params.get("lights") or [
            {"direction": (1.0, 0.6, 0.8), "rgb": (6.0, 5.5, 5.0), "sigma": 0.35},
            {"direction": (-1.0, -0.2, 0.3), "rgb": (1.5, 1.7, 2.2), "sigma": 0.55},
            {"direction": (0.2, -1.0, -0.4), "rgb": (2.0, 1.2, 0.8), "sigma": 0.40},
        ]
        if len(lights) != 3:
            raise ValueError("three-point needs exactly three lights")
        img = np.full((height, width, 3), float(params.get("ambient", 0.05)))
        for l in lights:
            if min(l["rgb"]) < 0:
                raise ValueError("light intensity must be >= 0")
            img = img + lobe(l["direction"], l["rgb"], l["sigma"])
    elif kind == "sun-sky":
        zenith = np.asarray(params.get("zenith_rgb", (0.35, 0.55, 0.95)))
        horizon = np.asarray(params.get("horizon_rgb", (0.85, 0.8, 0.7)))
        sun_dir = params.get("sun_direction", (0.5, 0.3, 0.8))
        sun_intensity = float(params.get("sun_intensity", 50.0))
        sun_sigma = float(params.get("sun_sigma", 0.05))
        if sun_intensity < 0 or zenith.min() < 0 or horizon.min() < 0:
            raise ValueError("intensities must be >= 0")
        up = np.clip(dirs[..., 2], 0.0, 1.0)[..., None]
        ground = float(params.get("ground", 0.15))
        img = np.where(dirs[..., 2:3] >= 0.0,
                       horizon + (zenith - horizon) * up,
                       np.full(3, ground))
        img = img + sun_intensity * lobe(sun_dir, (1.0, 0.95, 0.85), sun_sigma)
    else:
        raise ValueError(f"unknown synthetic environment kind {kind!r}")
    return EnvironmentLight(img.astype(np.float32))


def load_env(path) -> EnvironmentLight:
    """Load a lat-long PFM as a linear-radiance environment."""
    return EnvironmentLight(pfm.read_pfm(path))


def save_env(env: EnvironmentLight, path) -> None:
    pfm.write_pfm(path, env.radiance)
