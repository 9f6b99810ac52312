"""Transport integrators over voxel scenes.

Two solvers share the scene model: a deterministic emission-absorption
ray caster (front-to-back Riemann integration with analytic per-step
transmittance) and an unbiased Monte Carlo path tracer (delta-tracking
free flight against a global majorant, collision-estimator emission,
stochastic surface/medium shading, optional environment next-event
estimation with balance-heuristic MIS, and Russian roulette).

All stochastic kernels are written over lane batches; the scalar
operations wrap a batch of one, so both paths are the same code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import optics, volume as vol_mod
from .lighting import EnvironmentLight, env_eval, env_pdf, env_sample
from .optics import EmissionOverlay, TransferFunction, classify
from .rng import DIM_INTEGRATOR, LaneRng, RngStream
from .volume import ScalarVolume, gradient, sample_trilinear

_TINY = 1e-12


@dataclass(frozen=True)
class Ray:
    origin: tuple[float, float, float]
    direction: tuple[float, float, float]


@dataclass(frozen=True)
class PathTracerConfig:
    max_bounces: int = 64
    rr_start_bounce: int = 4
    rr_min_survival: float = 0.05
    use_nee: bool = True
    step_count_raycast: int = 256
    raycast_shading: bool = True
    debug_throughput_checks: bool = False

    def __post_init__(self):
        if self.max_bounces < 1 or self.rr_start_bounce < 1:
            raise ValueError("max_bounces and rr_start_bounce must be >= 1")
        if self.rr_start_bounce > self.max_bounces:
            raise ValueError("rr_start_bounce must be <= max_bounces")
        if not 0.0 < self.rr_min_survival <= 1.0:
            raise ValueError("rr_min_survival must be in (0, 1]")
        if self.step_count_raycast < 16:
            raise ValueError("step_count_raycast must be >= 16")


class Scene:
    """Volume + transfer function + lighting, with a verified majorant.

    The majorant upper-bounds density_scale * sigma_t everywhere, which
    delta tracking requires; construction scans every voxel plus the
    transfer function's control points, so the bound holds for all
    trilinearly interpolated values.
    """

    def __init__(self, volume: ScalarVolume, tf: TransferFunction,
                 env: EnvironmentLight, overlay: EmissionOverlay | None = None,
                 density_scale: float = 1.0, majorant: float | None = None):
        if density_scale <= 0:
            raise ValueError("density_scale must be > 0")
        est = estimate_majorant(volume, tf, density_scale)
        if majorant is None:
            majorant = est
        elif majorant < est:
            raise ValueError(
                f"majorant {majorant} below required bound {est}")
        self.volume = volume
        self.tf = tf
        self.env = env
        self.overlay = overlay
        self.density_scale = float(density_scale)
        self.majorant = float(majorant)

    def sigma_t_at(self, pts: np.ndarray) -> np.ndarray:
        """Scaled extinction at world points (vectorized hot path)."""
        v = np.atleast_1d(sample_trilinear(self.volume, pts))
        st = np.interp(v, self.tf.values, self.tf.table[:, 0] + self.tf.table[:, 1])
        return self.density_scale * st

    def props_at(self, pts: np.ndarray):
        """Full classification at points: (sigma_s, sigma_a, albedo, g, q_e).

        sigma_s/sigma_a are density-scaled; emission includes the
        overlay contribution when one is attached.
        """
        v = np.atleast_1d(sample_trilinear(self.volume, pts))
        rows = optics.classify_batch(self.tf, v)
        sig_s = self.density_scale * rows[:, 0]
        sig_a = self.density_scale * rows[:, 1]
        emission = rows[:, 6:9]
        if self.overlay is not None:
            emission = emission + optics.emission_at(self.overlay, np.atleast_2d(pts))
        return sig_s, sig_a, rows[:, 2:5], rows[:, 5], emission


def estimate_majorant(volume: ScalarVolume, tf: TransferFunction,
                      density_scale: float = 1.0) -> float:
    """Exact sigma_t bound: scan all voxel values plus control points.

    Trilinear samples are convex combinations of voxel values and the
    piecewise-linear sigma_t attains its extrema at control points or
    at data values, so this scan bounds every reachable sigma_t.
    """
    st_knots = tf.table[:, 0] + tf.table[:, 1]
    st_data = np.interp(volume.data.ravel(), tf.values, st_knots)
    return float(density_scale * max(st_data.max(), st_knots.max()))


def transmittance_analytic(sigma_t: float, d: float) -> float:
    """Beer-Lambert transmittance of a homogeneous segment (test oracle)."""
    if sigma_t < 0 or d < 0:
        raise ValueError("sigma_t and d must be >= 0")
    return float(np.exp(-sigma_t * d))


def ray_span(volume: ScalarVolume, org: np.ndarray, dirs: np.ndarray):
    """Entry/exit distances of rays against the volume bounding box.

    Returns (t0, t1, hit) with t0 clamped to 0; hit is False where the
    ray misses or the box lies entirely behind the origin.
    """
    lo, hi = volume.bbox
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        ta = (lo - org) * inv
        tb = (hi - org) * inv
    tmin = np.fmin(ta, tb)
    tmax = np.fmax(ta, tb)
    t0 = np.max(tmin, axis=1)
    t1 = np.min(tmax, axis=1)
    t0 = np.maximum(t0, 0.0)
    hit = t1 > t0
    return t0, t1, hit


def _normalize_rows(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# Emission-absorption ray caster (deterministic reference)

def ray_cast_batch(scene: Scene, org: np.ndarray, dirs: np.ndarray,
                   cfg: PathTracerConfig | None = None) -> np.ndarray:
    """Front-to-back Riemann integration of emission under absorption.

    Midpoint sampling with per-step weight T * dt (first order, with T
    the transmittance accumulated over prior steps). The optional
    local-illumination term shades the classified color with a
    diffuse-plus-Blinn lobe lit from the environment's brightest texel,
    weighted by sigma_s so purely absorptive media are unaffected.
    """
    cfg = cfg or PathTracerConfig()
    org = np.atleast_2d(np.asarray(org, dtype=np.float64))
    dirs = _normalize_rows(np.atleast_2d(np.asarray(dirs, dtype=np.float64)))
    n = len(org)
    out = env_eval(scene.env, dirs).copy()

    t0, t1, hit = ray_span(scene.volume, org, dirs)
    if not hit.any():
        return out

    steps = cfg.step_count_raycast
    o = org[hit]
    d = dirs[hit]
    dt = ((t1 - t0)[hit] / steps)
    offs = (np.arange(steps) + 0.5)
    tmid = t0[hit, None] + offs[None, :] * dt[:, None]
    pts = o[:, None, :] + d[:, None, :] * tmid[..., None]
    flat = pts.reshape(-1, 3)

    sig_s, sig_a, albedo, _, emission = scene.props_at(flat)
    m = hit.sum()
    sig_a = sig_a.reshape(m, steps)
    source = emission.reshape(m, steps, 3).copy()

    shading = cfg.raycast_shading and scene.tf.table[:, 0].max() > 0.0
    if shading:
        key_dir, key_rad = scene.env.key_light()
        if key_rad.max() > 0.0:
            grad = gradient(scene.volume, flat)
            gmag = np.linalg.norm(grad, axis=1)
            ok = gmag > 0.0
            nrm = np.where(ok[:, None], -grad / np.where(ok, gmag, 1.0)[:, None], 0.0)
            view = np.repeat(-d, steps, axis=0)
            ndotl = np.maximum(0.0, nrm @ key_dir)
            half_raw = view + key_dir
            half_len = np.maximum(np.linalg.norm(half_raw, axis=1), _TINY)
            half = half_raw / half_len[:, None]
            ndoth = np.maximum(0.0, np.sum(nrm * half, axis=1))
            rough = scene.tf.surface_roughness
            shin = 2.0 / (rough * rough) - 2.0
            spec = (1.0 - rough) * (shin + 2.0) / (2.0 * np.pi) * ndoth ** shin
            lobe = (ndotl / np.pi + spec * ndotl)[:, None] * key_rad[None, :]
            shade = sig_s[:, None] * albedo * lobe
            source += shade.reshape(m, steps, 3)

    od = sig_a * dt[:, None]
    tau_before = np.cumsum(od, axis=1) - od
    trans = np.exp(-tau_before)
    radiance = np.sum((trans * dt[:, None])[..., None] * source, axis=1)
    t_total = np.exp(-od.sum(axis=1))
    radiance += t_total[:, None] * env_eval(scene.env, d)
    out[hit] = radiance
    return out


def ray_cast(scene: Scene, ray: Ray, cfg: PathTracerConfig | None = None) -> np.ndarray:
    """Eq.-style emission-absorption radiance along one ray."""
    return ray_cast_batch(scene, np.asarray(ray.origin), np.asarray(ray.direction),
                          cfg)[0]


# ---------------------------------------------------------------------------
# Delta tracking

def free_flight_batch(scene: Scene, org: np.ndarray, dirs: np.ndarray,
                      t_start: np.ndarray, t_end: np.ndarray,
                      lanes: LaneRng, mask: np.ndarray | None = None):
    """Woodcock tracking along lane rays between t_start and t_end.

    Tentative exponential steps at the majorant rate; a tentative
    collision is real with probability sigma_t/majorant. Returns
    (t, collided); lanes without a real collision before t_end escaped.
    """
    n = len(org)
    t = np.array(t_start, dtype=np.float64)
    collided = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool) if mask is None else mask.copy()
    mu = scene.majorant
    if mu <= 0.0:
        return t, collided
    active &= t_end > t_start
    while active.any():
        u = lanes.draw(active)
        t[active] -= np.log1p(-u) / mu
        active &= t <= t_end
        if not active.any():
            break
        idx = np.where(active)[0]
        pts = org[idx] + dirs[idx] * t[idx, None]
        st = scene.sigma_t_at(pts)
        u2 = lanes.draw(active)
        real = u2 * mu < st
        collided[idx[real]] = True
        active[idx[real]] = False
    return t, collided


@dataclass(frozen=True)
class FreeFlight:
    collided: bool
    t: float
    props: optics.OpticalProperties | None


def sample_free_flight(scene: Scene, ray: Ray, t_max: float,
                       rng: RngStream) -> FreeFlight:
    """Single-ray delta tracking; see free_flight_batch."""
    org = np.asarray([ray.origin], dtype=np.float64)
    d = _normalize_rows(np.asarray([ray.direction], dtype=np.float64))
    lanes = LaneRng(rng.seed, rng.frame, np.array([rng.pixel]),
                    np.array([rng.sample]), dim=rng.dim)
    t, coll = free_flight_batch(scene, org, d, np.zeros(1),
                                np.array([float(t_max)]), lanes)
    rng.dim = int(lanes.dim[0])
    if not coll[0]:
        return FreeFlight(False, float(t[0]), None)
    p = org[0] + d[0] * t[0]
    v = sample_trilinear(scene.volume, p)
    return FreeFlight(True, float(t[0]), classify(scene.tf, v))


def _ratio_track(scene: Scene, org: np.ndarray, dirs: np.ndarray,
                 lanes: LaneRng, mask: np.ndarray) -> np.ndarray:
    """Unbiased transmittance estimate toward the environment (shadow rays)."""
    n = len(org)
    tr = np.ones(n, dtype=np.float64)
    mu = scene.majorant
    if mu <= 0.0:
        return tr
    t0, t1, hit = ray_span(scene.volume, org, dirs)
    active = mask & hit
    t = np.maximum(t0, 0.0)
    while active.any():
        u = lanes.draw(active)
        t[active] -= np.log1p(-u) / mu
        active &= t <= t1
        if not active.any():
            break
        idx = np.where(active)[0]
        st = scene.sigma_t_at(org[idx] + dirs[idx] * t[idx, None])
        tr[idx] *= 1.0 - st / mu
        dead = idx[tr[idx] <= 0.0]
        active[dead] = False
    return tr


# ---------------------------------------------------------------------------
# Monte Carlo path tracer

def path_trace_batch(scene: Scene, org: np.ndarray, dirs: np.ndarray,
                     cfg: PathTracerConfig, lanes: LaneRng) -> np.ndarray:
    """One radiance sample per lane; unbiased by construction.

    Draw order per collision is fixed: absorb/scatter roulette, surface
    blend, NEE (two env draws plus ratio tracking), lobe draws, Russian
    roulette. Lanes advance their own dimension counters, so each
    (pixel, sample) stream is independent of batch composition.
    """
    org = np.array(np.atleast_2d(org), dtype=np.float64)
    dirs = _normalize_rows(np.array(np.atleast_2d(dirs), dtype=np.float64))
    n = len(org)
    radiance = np.zeros((n, 3), dtype=np.float64)
    thr = np.ones((n, 3), dtype=np.float64)
    alive = np.ones(n, dtype=bool)
    bounces = np.zeros(n, dtype=np.int64)
    prev_pdf = np.zeros(n, dtype=np.float64)
    scattered = np.zeros(n, dtype=bool)

    nee_on = cfg.use_nee and scene.env.total_weight > 0.0 and scene.majorant > 0.0
    mean_spacing = float(np.mean(scene.volume.spacing))
    thresh = scene.tf.surface_gradient_threshold
    rough = scene.tf.surface_roughness

    def escape(mask: np.ndarray):
        if not mask.any():
            return
        rad = env_eval(scene.env, dirs[mask])
        w = np.ones(mask.sum())
        mis = scattered[mask] & nee_on
        if mis.any():
            pe = env_pdf(scene.env, dirs[mask][mis])
            pp = prev_pdf[mask][mis]
            w[mis] = pp / (pp + pe)
        radiance[mask] += thr[mask] * rad * w[:, None]
        alive[mask] = False

    while alive.any():
        t0, t1, hit_box = ray_span(scene.volume, org, dirs)
        miss = alive & ~hit_box
        escape(miss)
        if not alive.any():
            break

        t, coll = free_flight_batch(scene, org, dirs, t0, t1, lanes, mask=alive)
        escape(alive & ~coll)
        hit = alive & coll
        if not hit.any():
            break

        idx = np.where(hit)[0]
        x = org[idx] + dirs[idx] * t[idx, None]
        sig_s, sig_a, albedo, g_coef, emission = scene.props_at(x)
        sig_t = sig_s + sig_a

        with np.errstate(divide="ignore", invalid="ignore"):
            emit = np.where(sig_t[:, None] > 0.0, emission / sig_t[:, None], 0.0)
        radiance[idx] += thr[idx] * emit

        # absorb/scatter roulette keeps throughput <= 1 per channel
        u_scat = lanes.draw(hit)
        scat = u_scat * sig_t < sig_s
        over = bounces[idx] >= cfg.max_bounces
        scat &= ~over
        alive[idx[~scat]] = False
        if not scat.any():
            continue

        sidx = idx[scat]
        x = x[scat]
        albedo = albedo[scat]
        g_coef = g_coef[scat]
        d_in = dirs[sidx]
        bounces[sidx] += 1

        # stochastic surface / medium blend from the local gradient
        smask = np.zeros(len(sidx), dtype=bool)
        normals = np.zeros((len(sidx), 3), dtype=np.float64)
        hmask = np.zeros(n, dtype=bool)
        hmask[sidx] = True
        u_ev = lanes.draw(hmask)
        if thresh > 0.0:
            grad = np.atleast_2d(gradient(scene.volume, x))
            gmag = np.linalg.norm(grad, axis=1)
            p_surf = np.minimum(1.0, gmag * mean_spacing / thresh)
            smask = (u_ev < p_surf) & (gmag > 0.0)
            normals[smask] = -grad[smask] / gmag[smask, None]
            # two-sided: face the normal against the incoming ray
            flip = np.sum(normals * d_in, axis=1) > 0.0
            normals[flip] *= -1.0

        if nee_on:
            ul1 = lanes.draw(hmask)
            ul2 = lanes.draw(hmask)
            dl, rad_l, pdf_l = env_sample(scene.env, ul1, ul2)
            x_full = np.zeros((n, 3))
            dl_full = np.zeros((n, 3))
            x_full[sidx] = x
            dl_full[sidx] = dl
            tr = _ratio_track(scene, x_full, dl_full, lanes, hmask)[sidx]
            f_l = np.zeros((len(sidx), 3))
            p_lobe = np.zeros(len(sidx))
            med = ~smask
            if med.any():
                cos_l = np.sum(d_in[med] * dl[med], axis=1)
                ph = optics.hg_phase(g_coef[med], cos_l)
                f_l[med] = albedo[med] * ph[:, None]
                p_lobe[med] = ph
            if smask.any():
                cos_l = np.sum(normals[smask] * dl[smask], axis=1)
                f = optics.eval_brdf(normals[smask], -d_in[smask], dl[smask],
                                     albedo[smask], rough)
                f_l[smask] = np.atleast_2d(f) * np.maximum(cos_l, 0.0)[:, None]
                p_lobe[smask] = np.atleast_1d(
                    optics.brdf_pdf(normals[smask], -d_in[smask], dl[smask], rough))
            radiance[sidx] += thr[sidx] * f_l * rad_l * \
                (tr / (pdf_l + p_lobe))[:, None]

        # sample the continuation lobe
        u1 = lanes.draw(hmask)
        u2 = lanes.draw(hmask)
        new_dir = np.zeros((len(sidx), 3))
        new_pdf = np.zeros(len(sidx))
        med = ~smask
        if med.any():
            d_m, pdf_m = optics.sample_hg(g_coef[med], d_in[med], u1[med], u2[med])
            new_dir[med] = np.atleast_2d(d_m)
            new_pdf[med] = pdf_m
            thr[sidx[med]] *= albedo[med]
        if smask.any():
            lmask = np.zeros(n, dtype=bool)
            lmask[sidx[smask]] = True
            u_lobe = lanes.draw(lmask)
            d_s, pdf_s, w_s = optics.sample_brdf(normals[smask], -d_in[smask],
                                                 albedo[smask], rough,
                                                 u_lobe, u1[smask], u2[smask])
            new_dir[smask] = np.atleast_2d(d_s)
            new_pdf[smask] = pdf_s
            thr[sidx[smask]] *= np.atleast_2d(w_s)

        dead = np.max(thr[sidx], axis=1) <= 0.0
        alive[sidx[dead]] = False

        # Russian roulette on max-channel throughput (keeps channels <= 1)
        rr = np.zeros(n, dtype=bool)
        rr[sidx] = (bounces[sidx] >= cfg.rr_start_bounce) & ~dead
        if rr.any():
            u_rr = lanes.draw(rr)
            ridx = np.where(rr)[0]
            surv = np.maximum(cfg.rr_min_survival,
                              np.minimum(1.0, np.max(thr[ridx], axis=1)))
            kill = u_rr >= surv
            alive[ridx[kill]] = False
            keep = ridx[~kill]
            thr[keep] /= surv[~kill][:, None]

        if cfg.debug_throughput_checks:
            live = thr[sidx][alive[sidx]]
            if live.size and (live.min() < -_TINY or live.max() > 1.0 + 1e-9):
                raise AssertionError(
                    f"throughput left [0,1]: [{live.min()}, {live.max()}]")

        org[sidx] = x
        dirs[sidx] = new_dir
        prev_pdf[sidx] = new_pdf
        scattered[sidx] = True

    return radiance


def path_trace_sample(scene: Scene, ray: Ray, cfg: PathTracerConfig,
                      rng: RngStream) -> np.ndarray:
    """One Monte Carlo radiance sample along a camera ray."""
    lanes = LaneRng(rng.seed, rng.frame, np.array([rng.pixel]),
                    np.array([rng.sample]), dim=rng.dim)
    out = path_trace_batch(scene, np.asarray([ray.origin]),
                           np.asarray([ray.direction]), cfg, lanes)
    rng.dim = int(lanes.dim[0])
    return out[0]
