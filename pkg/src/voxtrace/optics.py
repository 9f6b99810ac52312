"""Optical classification and scattering models.

Maps normalized scalar values to optical coefficients through a
piecewise-linear transfer function, evaluates and samples the
Henyey-Greenstein phase function, shades implicit surfaces with an
energy-conserving Lambertian + glossy BRDF, and layers emissive
overlays for functional data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import volume as vol_mod
from .volume import ScalarVolume

INV_4PI = 1.0 / (4.0 * np.pi)
_G_CLAMP = 1.0 - 1e-6

# Linear-RGB luminance weights (also used by lighting CDFs).
LUMA = np.array([0.2126, 0.7152, 0.0722])


@dataclass(frozen=True)
class OpticalProperties:
    """Coefficients per mm plus chromatic modifiers at one scalar value."""

    sigma_s: float
    sigma_a: float
    albedo_color: tuple[float, float, float]
    g: float
    q_e: tuple[float, float, float]

    def __post_init__(self):
        if self.sigma_s < 0 or self.sigma_a < 0:
            raise ValueError("scattering/absorption coefficients must be >= 0")
        if not -1.0 < self.g < 1.0:
            raise ValueError(f"anisotropy g must lie strictly in (-1, 1), got {self.g}")
        if min(self.q_e) < 0 or min(self.albedo_color) < 0 or max(self.albedo_color) > 1:
            raise ValueError("albedo_color must be in [0,1], q_e must be >= 0")

    @property
    def sigma_t(self) -> float:
        return self.sigma_s + self.sigma_a


VACUUM = OpticalProperties(0.0, 0.0, (0.0, 0.0, 0.0), 0.0, (0.0, 0.0, 0.0))


class TransferFunction:
    """Piecewise-linear map from normalized value to optical properties.

    Control points must have strictly increasing values, with the first
    at 0 and the last at 1.
    """

    def __init__(self, points, surface_gradient_threshold: float = 0.0,
                 surface_roughness: float = 1.0):
        points = [(float(v), p) for v, p in points]
        if len(points) < 2:
            raise ValueError("need at least 2 control points")
        values = np.array([v for v, _ in points])
        if np.any(np.diff(values) <= 0):
            raise ValueError("control point values must be strictly increasing")
        if values[0] != 0.0 or values[-1] != 1.0:
            raise ValueError("control points must start at 0 and end at 1")
        if surface_gradient_threshold < 0:
            raise ValueError("surface_gradient_threshold must be >= 0")
        if not 0.0 < surface_roughness <= 1.0:
            raise ValueError("surface_roughness must be in (0, 1]")

        self.points = tuple(points)
        self.surface_gradient_threshold = float(surface_gradient_threshold)
        self.surface_roughness = float(surface_roughness)
        self.values = values
        # column layout: sigma_s, sigma_a, albedo rgb, g, q_e rgb
        self.table = np.array(
            [[p.sigma_s, p.sigma_a, *p.albedo_color, p.g, *p.q_e] for _, p in points])

    def max_sigma_t(self) -> float:
        st = self.table[:, 0] + self.table[:, 1]
        return float(st.max())


def classify_batch(tf: TransferFunction, s: np.ndarray) -> np.ndarray:
    """Interpolated property table rows for an array of values; (N, 9)."""
    s = np.asarray(s, dtype=np.float64)
    idx = np.searchsorted(tf.values, s, side="right") - 1
    idx = np.clip(idx, 0, len(tf.values) - 2)
    v0 = tf.values[idx]
    v1 = tf.values[idx + 1]
    w = ((s - v0) / (v1 - v0))[..., None]
    out = tf.table[idx] * (1.0 - w) + tf.table[idx + 1] * w
    out[..., 5] = np.clip(out[..., 5], -_G_CLAMP, _G_CLAMP)
    return out


def classify(tf: TransferFunction, s: float) -> OpticalProperties:
    """Optical properties at one normalized value in [0, 1]."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"value {s} outside [0, 1]")
    row = classify_batch(tf, np.array([s]))[0]
    return OpticalProperties(float(row[0]), float(row[1]),
                             (float(row[2]), float(row[3]), float(row[4])),
                             float(row[5]),
                             (float(row[6]), float(row[7]), float(row[8])))


def hg_phase(g, cos_theta):
    """Henyey-Greenstein phase density per steradian.

    p(cos t) = (1/4pi) (1 - g^2) / (1 + g^2 - 2 g cos t)^(3/2)
    """
    g = np.asarray(g, dtype=np.float64)
    cos_theta = np.asarray(cos_theta, dtype=np.float64)
    denom = 1.0 + g * g - 2.0 * g * cos_theta
    return INV_4PI * (1.0 - g * g) / (denom * np.sqrt(denom))


def orthonormal_basis(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two tangents completing unit vector(s) n to a right-handed frame."""
    n = np.asarray(n, dtype=np.float64)
    single = n.ndim == 1
    n2 = np.atleast_2d(n)
    s = np.copysign(1.0, n2[:, 2])
    a = -1.0 / (s + n2[:, 2])
    b = n2[:, 0] * n2[:, 1] * a
    t1 = np.stack([1.0 + s * n2[:, 0] ** 2 * a, s * b, -s * n2[:, 0]], axis=1)
    t2 = np.stack([b, s + n2[:, 1] ** 2 * a, -n2[:, 1]], axis=1)
    if single:
        return t1[0], t2[0]
    return t1, t2


def _spherical_about(axis: np.ndarray, cos_theta: np.ndarray,
                     phi: np.ndarray) -> np.ndarray:
    t1, t2 = orthonormal_basis(np.atleast_2d(axis))
    axis2 = np.atleast_2d(axis)
    ct = np.atleast_1d(cos_theta)[:, None]
    st = np.sqrt(np.maximum(0.0, 1.0 - ct * ct))
    ph = np.atleast_1d(phi)[:, None]
    d = st * np.cos(ph) * t1 + st * np.sin(ph) * t2 + ct * axis2
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def sample_hg(g, incoming, u1, u2):
    """Inverse-CDF sample of the HG lobe around the propagation direction.

    u1 drives cos(theta), u2 the azimuth. Returns (direction, pdf) where
    pdf equals hg_phase(g, cos theta) of the sampled angle. Accepts
    arrays for batch use; scalars return a single (3,) direction.
    """
    g_arr = np.asarray(g, dtype=np.float64)
    u1 = np.asarray(u1, dtype=np.float64)
    u2 = np.asarray(u2, dtype=np.float64)
    single = np.ndim(incoming) == 1 and u1.ndim == 0

    g_b = np.atleast_1d(g_arr)
    u1_b = np.atleast_1d(u1)
    iso = g_b == 0.0
    g_safe = np.where(iso, 0.5, g_b)
    sq = (1.0 - g_safe * g_safe) / (1.0 + g_safe - 2.0 * g_safe * u1_b)
    cos_theta = np.where(
        iso,
        1.0 - 2.0 * u1_b,
        (1.0 + g_safe * g_safe - sq * sq) / (2.0 * g_safe),
    )
    cos_theta = np.clip(cos_theta, -1.0, 1.0)
    phi = 2.0 * np.pi * np.atleast_1d(u2)
    d = _spherical_about(np.asarray(incoming, dtype=np.float64), cos_theta, phi)
    pdf = hg_phase(g_b, cos_theta)
    if single:
        return d[0], float(pdf[0])
    return d, pdf


def reflect(v: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Mirror v about n; both pointing away from the surface point."""
    v = np.asarray(v, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    if v.ndim == 1:
        return 2.0 * np.dot(v, n) * n - v
    return 2.0 * np.sum(v * n, axis=1, keepdims=True) * n - v


def _phong_exponent(roughness: float) -> float:
    return 2.0 / (roughness * roughness) - 2.0


def eval_brdf(normal, wi, wo, albedo, roughness):
    """Lambertian + normalized glossy lobe; zero below the hemisphere.

    roughness 1 is pure Lambertian (albedo/pi); lower roughness shifts
    energy into a Phong lobe around the mirror direction, normalized so
    the directional-hemispherical reflectance never exceeds 1.
    """
    normal = np.asarray(normal, dtype=np.float64)
    wi = np.asarray(wi, dtype=np.float64)
    wo = np.asarray(wo, dtype=np.float64)
    albedo = np.asarray(albedo, dtype=np.float64)
    single = normal.ndim == 1
    n2 = np.atleast_2d(normal)
    wi2 = np.atleast_2d(wi)
    wo2 = np.atleast_2d(wo)
    al2 = np.atleast_2d(albedo)

    cos_i = np.sum(wi2 * n2, axis=1)
    cos_o = np.sum(wo2 * n2, axis=1)
    above = (cos_i > 0.0) & (cos_o > 0.0)

    ks = 1.0 - roughness
    f = (1.0 - ks) * al2 / np.pi
    if ks > 0.0:
        n_exp = _phong_exponent(roughness)
        r = reflect(wi2, n2)
        cos_r = np.clip(np.sum(r * wo2, axis=1), 0.0, 1.0)
        glossy = ks * (n_exp + 1.0) / (2.0 * np.pi) * cos_r ** n_exp
        f = f + glossy[:, None]
    f = np.where(above[:, None], f, 0.0)
    return f[0] if single else f


def brdf_pdf(normal, wi, wo, roughness):
    """Density of sample_brdf directions, per steradian."""
    normal = np.asarray(normal, dtype=np.float64)
    wi2 = np.atleast_2d(np.asarray(wi, dtype=np.float64))
    wo2 = np.atleast_2d(np.asarray(wo, dtype=np.float64))
    n2 = np.atleast_2d(normal)
    single = normal.ndim == 1

    cos_o = np.sum(wo2 * n2, axis=1)
    ks = 1.0 - roughness
    pdf = (1.0 - ks) * np.maximum(cos_o, 0.0) / np.pi
    if ks > 0.0:
        n_exp = _phong_exponent(roughness)
        r = reflect(wi2, n2)
        cos_r = np.clip(np.sum(r * wo2, axis=1), 0.0, 1.0)
        pdf = pdf + ks * (n_exp + 1.0) / (2.0 * np.pi) * cos_r ** n_exp
    pdf = np.where(cos_o > 0.0, pdf, 0.0)
    return float(pdf[0]) if single else pdf


def sample_brdf(normal, wi, albedo, roughness, u_lobe, u1, u2):
    """Sample an outgoing direction from the cosine/glossy lobe mixture.

    Returns (wo, pdf, weight) with weight = f * cos / pdf, which stays
    within [0, 1] per channel for albedo <= 1. Batch-friendly.
    """
    normal = np.asarray(normal, dtype=np.float64)
    single = normal.ndim == 1
    n2 = np.atleast_2d(normal)
    wi2 = np.atleast_2d(np.asarray(wi, dtype=np.float64))
    al2 = np.atleast_2d(np.asarray(albedo, dtype=np.float64))
    u_lobe = np.atleast_1d(np.asarray(u_lobe, dtype=np.float64))
    u1 = np.atleast_1d(np.asarray(u1, dtype=np.float64))
    u2 = np.atleast_1d(np.asarray(u2, dtype=np.float64))

    ks = 1.0 - roughness
    phi = 2.0 * np.pi * u2
    # cosine-weighted hemisphere sample around the normal
    ct_diff = np.sqrt(1.0 - u1)
    wo = _spherical_about(n2, ct_diff, phi)
    if ks > 0.0:
        n_exp = _phong_exponent(roughness)
        r = reflect(wi2, n2)
        ct_spec = u1 ** (1.0 / (n_exp + 1.0))
        wo_spec = _spherical_about(r, ct_spec, phi)
        wo = np.where((u_lobe < ks)[:, None], wo_spec, wo)

    pdf = brdf_pdf(n2, wi2, wo, roughness)
    pdf = np.atleast_1d(pdf)
    f = np.atleast_2d(eval_brdf(n2, wi2, wo, al2, roughness))
    cos_o = np.maximum(np.sum(wo * n2, axis=1), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        weight = np.where((pdf > 0.0)[:, None], f * cos_o[:, None] / pdf[:, None], 0.0)
    if single:
        return wo[0], float(pdf[0]), weight[0]
    return wo, pdf, weight


class EmissionOverlay:
    """Co-registered functional volume mapped to emitted radiance.

    The colormap is piecewise linear over the overlay's normalized
    values; `strength` scales the result. Points outside the overlay's
    bounding box emit nothing.
    """

    def __init__(self, volume: ScalarVolume, colormap, strength: float = 1.0):
        colormap = [(float(v), tuple(float(c) for c in rgb)) for v, rgb in colormap]
        values = np.array([v for v, _ in colormap])
        if len(colormap) < 2 or np.any(np.diff(values) <= 0):
            raise ValueError("colormap values must be strictly increasing")
        if values[0] != 0.0 or values[-1] != 1.0:
            raise ValueError("colormap must span [0, 1]")
        rgb = np.array([c for _, c in colormap])
        if rgb.min() < 0:
            raise ValueError("emission colors must be >= 0")
        if strength < 0:
            raise ValueError("strength must be >= 0")
        self.volume = volume
        self.colormap = tuple(colormap)
        self.values = values
        self.rgb = rgb
        self.strength = float(strength)


def emission_at(overlay: EmissionOverlay, p):
    """Emitted radiance density at world point(s); zero outside the overlay."""
    pts, scalar = (np.asarray(p, dtype=np.float64).reshape(1, 3), True) \
        if np.ndim(p) == 1 else (np.asarray(p, dtype=np.float64), False)
    s = np.atleast_1d(vol_mod.sample_trilinear(overlay.volume, pts))
    lo, hi = overlay.volume.bbox
    inside = np.all((pts >= lo) & (pts <= hi), axis=1)

    idx = np.clip(np.searchsorted(overlay.values, s, side="right") - 1,
                  0, len(overlay.values) - 2)
    v0 = overlay.values[idx]
    v1 = overlay.values[idx + 1]
    w = ((s - v0) / (v1 - v0))[:, None]
    rgb = overlay.rgb[idx] * (1.0 - w) + overlay.rgb[idx + 1] * w
    out = overlay.strength * np.where(inside[:, None], rgb, 0.0)
    return out[0] if scalar else out
