"""Camera model, progressive accumulation, tone mapping, animation.

The thin-lens camera refocuses jittered pinhole rays through the point
at focal_distance along the pinhole ray, so an aperture of zero
degenerates to a pinhole exactly. Frames are rendered row by row with
fixed tiling; worker count only changes which process computes a row,
never its content, which is what makes renders bit-identical across
parallelism levels.
"""

from __future__ import annotations

import concurrent.futures
import multiprocessing
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from . import rng as rng_mod
from .integrate import PathTracerConfig, Scene, path_trace_batch, ray_cast_batch
from .rng import LaneRng, uniform


@dataclass(frozen=True)
class Camera:
    position: tuple[float, float, float]
    target: tuple[float, float, float]
    up: tuple[float, float, float] = (0.0, 0.0, 1.0)
    vfov_deg: float = 40.0
    aperture_radius: float = 0.0
    focal_distance: float = 100.0
    exposure_ev: float = 0.0
    shutter: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if tuple(self.position) == tuple(self.target):
            raise ValueError("camera position and target must differ")
        if not 0.0 < self.vfov_deg < 180.0:
            raise ValueError("vfov_deg must lie in (0, 180)")
        if self.aperture_radius < 0 or self.focal_distance <= 0:
            raise ValueError("aperture must be >= 0 and focal distance > 0")
        if self.shutter[0] > self.shutter[1]:
            raise ValueError("shutter must satisfy t0 <= t1")
        self.basis()  # rejects up parallel to the view direction

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Right-handed (forward, right, up) frame of the look-at pose."""
        pos = np.asarray(self.position, dtype=np.float64)
        fwd = np.asarray(self.target, dtype=np.float64) - pos
        fwd = fwd / np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(self.up, dtype=np.float64))
        nr = np.linalg.norm(right)
        if nr < 1e-12:
            raise ValueError("up vector is parallel to the view direction")
        right = right / nr
        return fwd, right, np.cross(right, fwd)


def _rays_from_frames(pos, fwd, right, up2, vfov_deg, aperture, focal,
                      width, height, px, py, jx, jy, lens_u, lens_v):
    """Primary rays from per-lane camera frames (all arrays broadcast)."""
    half_h = np.tan(np.radians(vfov_deg) * 0.5)
    half_w = half_h * width / height
    ndc_x = ((px + jx) / width) * 2.0 - 1.0
    ndc_y = 1.0 - 2.0 * ((py + jy) / height)
    d = (fwd + (ndc_x * half_w)[:, None] * right
         + (ndc_y * half_h)[:, None] * up2)
    d = d / np.linalg.norm(d, axis=1, keepdims=True)
    r = np.atleast_1d(aperture)
    if r.max() > 0.0:
        rr = r * np.sqrt(lens_u)
        ph = 2.0 * np.pi * lens_v
        offset = (rr * np.cos(ph))[:, None] * right + (rr * np.sin(ph))[:, None] * up2
        origins = pos + offset
        focus = pos + d * np.atleast_1d(focal)[:, None]
        d = focus - origins
        d = d / np.linalg.norm(d, axis=1, keepdims=True)
    else:
        origins = np.broadcast_to(pos, d.shape).copy()
    return origins, d


def generate_rays_batch(cam: Camera, width: int, height: int,
                        px: np.ndarray, py: np.ndarray,
                        jx: np.ndarray, jy: np.ndarray,
                        lens_u: np.ndarray, lens_v: np.ndarray):
    """Vectorized primary rays: (origins, directions), both (N, 3)."""
    fwd, right, up2 = cam.basis()
    pos = np.asarray(cam.position, dtype=np.float64)
    return _rays_from_frames(pos[None, :], fwd[None, :], right[None, :],
                             up2[None, :], cam.vfov_deg, cam.aperture_radius,
                             cam.focal_distance, width, height,
                             px, py, jx, jy, lens_u, lens_v)


def generate_ray(cam: Camera, width: int, height: int, px: int, py: int,
                 u_lens: tuple[float, float], u_time: float,
                 u_jitter: tuple[float, float]):
    """One stochastic camera ray plus its shutter time."""
    o, d = generate_rays_batch(cam, width, height,
                               np.array([float(px)]), np.array([float(py)]),
                               np.array([u_jitter[0]]), np.array([u_jitter[1]]),
                               np.array([u_lens[0]]), np.array([u_lens[1]]))
    t0, t1 = cam.shutter
    return (o[0], d[0]), t0 + u_time * (t1 - t0)


@dataclass
class AccumulationBuffer:
    """Per-pixel running mean radiance and uniform sample count."""

    width: int
    height: int
    mean: np.ndarray
    count: int = 0

    @classmethod
    def create(cls, width: int, height: int) -> "AccumulationBuffer":
        if width < 1 or height < 1:
            raise ValueError("buffer dimensions must be >= 1")
        return cls(width, height, np.zeros((height, width, 3), dtype=np.float64))

    def copy(self) -> "AccumulationBuffer":
        return AccumulationBuffer(self.width, self.height, self.mean.copy(),
                                  self.count)


def accumulate(buf: AccumulationBuffer, pass_mean: np.ndarray,
               samples_per_pixel: int = 1) -> AccumulationBuffer:
    """Fold a pass (mean of k samples per pixel) into the running mean."""
    pass_mean = np.asarray(pass_mean, dtype=np.float64)
    if pass_mean.shape != (buf.height, buf.width, 3):
        raise ValueError(
            f"pass shape {pass_mean.shape} does not match buffer "
            f"{(buf.height, buf.width, 3)}")
    k = int(samples_per_pixel)
    new_count = buf.count + k
    buf.mean += (pass_mean - buf.mean) * (k / new_count)
    buf.count = new_count
    return buf


def _srgb_encode(c: np.ndarray) -> np.ndarray:
    lo = c * 12.92
    hi = 1.055 * np.power(c, 1.0 / 2.4, where=c > 0, out=np.zeros_like(c)) - 0.055
    return np.where(c <= 0.0031308, lo, hi)


def tone_map(buf, exposure_ev: float = 0.0) -> np.ndarray:
    """Exposure-scaled, clamped sRGB quantization to uint8 (round half up)."""
    mean = buf.mean if isinstance(buf, AccumulationBuffer) else np.asarray(buf)
    linear = np.clip(mean * (2.0 ** exposure_ev), 0.0, 1.0)
    srgb = np.clip(_srgb_encode(linear), 0.0, 1.0)
    return np.floor(srgb * 255.0 + 0.5).astype(np.uint8)


# ---------------------------------------------------------------------------
# Keyframe animation

@dataclass(frozen=True)
class Keyframe:
    time: float
    camera: Camera
    tf_id: str | None = None
    env_id: str | None = None


@dataclass(frozen=True)
class TrackSample:
    camera: Camera
    tf_id: str | None = None
    env_id: str | None = None


class AnimationTrack:
    def __init__(self, keyframes):
        keyframes = tuple(keyframes)
        if not keyframes:
            raise ValueError("a track needs at least one keyframe")
        times = [k.time for k in keyframes]
        if any(t < 0 for t in times) or any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("keyframe times must be >= 0 and strictly increasing")
        self.keyframes = keyframes

    @property
    def duration(self) -> float:
        return self.keyframes[-1].time


def _camera_rotation(cam: Camera) -> Rotation:
    # camera-to-world with the view axis on -Z (right-handed frame)
    fwd, right, up2 = cam.basis()
    return Rotation.from_matrix(np.column_stack([right, up2, -fwd]))


def interpolate_track(track: AnimationTrack, t: float) -> TrackSample:
    """Pose at time t: exact at keyframes, slerped orientation between,
    linear position/scalars, clamped outside the track's range."""
    kfs = track.keyframes
    if t <= kfs[0].time:
        k = kfs[0]
        return TrackSample(k.camera, k.tf_id, k.env_id)
    if t >= kfs[-1].time:
        k = kfs[-1]
        return TrackSample(k.camera, k.tf_id, k.env_id)
    hi = next(i for i, k in enumerate(kfs) if k.time >= t)
    if kfs[hi].time == t:
        k = kfs[hi]
        return TrackSample(k.camera, k.tf_id, k.env_id)
    a, b = kfs[hi - 1], kfs[hi]
    if a.camera == b.camera:
        return TrackSample(a.camera, a.tf_id, a.env_id)
    w = (t - a.time) / (b.time - a.time)

    def lerp(x, y):
        return (1.0 - w) * np.asarray(x, dtype=np.float64) + w * np.asarray(y)

    pos = lerp(a.camera.position, b.camera.position)
    dist = lerp(np.linalg.norm(np.subtract(a.camera.target, a.camera.position)),
                np.linalg.norm(np.subtract(b.camera.target, b.camera.position)))
    rot = Slerp([0.0, 1.0], Rotation.concatenate(
        [_camera_rotation(a.camera), _camera_rotation(b.camera)]))(w)
    m = rot.as_matrix()
    fwd, up2 = -m[:, 2], m[:, 1]
    cam = Camera(
        position=tuple(pos),
        target=tuple(pos + float(dist) * fwd),
        up=tuple(up2),
        vfov_deg=float(lerp(a.camera.vfov_deg, b.camera.vfov_deg)),
        aperture_radius=float(lerp(a.camera.aperture_radius,
                                   b.camera.aperture_radius)),
        focal_distance=float(lerp(a.camera.focal_distance,
                                  b.camera.focal_distance)),
        exposure_ev=float(lerp(a.camera.exposure_ev, b.camera.exposure_ev)),
        shutter=(float(lerp(a.camera.shutter[0], b.camera.shutter[0])),
                 float(lerp(a.camera.shutter[1], b.camera.shutter[1]))),
    )
    return TrackSample(cam, a.tf_id, a.env_id)


def _track_pose_arrays(track: AnimationTrack, times: np.ndarray):
    """Vectorized pose sampling for motion blur: per-lane camera frames.

    The scalar interpolate_track defines the semantics; this evaluates
    the same slerp/lerp on an array of times in one shot.
    """
    kfs = track.keyframes
    kt = np.array([k.time for k in kfs])
    t = np.clip(np.asarray(times, dtype=np.float64), kt[0], kt[-1])
    pos_k = np.array([k.camera.position for k in kfs])
    dist_k = np.array([np.linalg.norm(np.subtract(k.camera.target,
                                                  k.camera.position))
                       for k in kfs])
    vfov_k = np.array([k.camera.vfov_deg for k in kfs])
    ap_k = np.array([k.camera.aperture_radius for k in kfs])
    focal_k = np.array([k.camera.focal_distance for k in kfs])

    if len(kfs) == 1:
        t = np.zeros_like(t)
        kt = np.array([0.0, 1.0])
        reps = [kfs[0], kfs[0]]
        pos_k = np.vstack([pos_k, pos_k])
        dist_k = np.repeat(dist_k, 2)
        vfov_k = np.repeat(vfov_k, 2)
        ap_k = np.repeat(ap_k, 2)
        focal_k = np.repeat(focal_k, 2)
        rots = Rotation.concatenate([_camera_rotation(k.camera) for k in reps])
    else:
        rots = Rotation.concatenate([_camera_rotation(k.camera) for k in kfs])

    m = Slerp(kt, rots)(t).as_matrix()
    if m.ndim == 2:
        m = m[None]
    pos = np.stack([np.interp(t, kt, pos_k[:, i]) for i in range(3)], axis=1)
    return {
        "pos": pos,
        "fwd": -m[:, :, 2], "right": m[:, :, 0], "up": m[:, :, 1],
        "vfov_deg": np.interp(t, kt, vfov_k),
        "aperture": np.interp(t, kt, ap_k),
        "focal": np.interp(t, kt, focal_k),
    }


def default_camera(volume, vfov_deg: float = 40.0) -> Camera:
    """Frame a volume's bounding box from a three-quarter view."""
    lo, hi = volume.bbox
    center = (lo + hi) / 2.0
    radius = float(np.linalg.norm(hi - lo)) / 2.0
    dist = 2.6 * radius / np.tan(np.radians(vfov_deg) * 0.5)
    eye = center + dist * np.array([0.55, -0.65, 0.52]) / np.linalg.norm(
        [0.55, -0.65, 0.52])
    return Camera(position=tuple(eye), target=tuple(center),
                  focal_distance=float(dist))


# ---------------------------------------------------------------------------
# Frame rendering

def _render_rows(scene, cam, width, height, spp, cfg, seed, frame,
                 sample_offset, integrator, track, frame_time, frame_duration,
                 rows):
    out = np.zeros((len(rows), width, 3), dtype=np.float64)
    for i, py in enumerate(rows):
        if integrator == "raycast":
            px = np.arange(width, dtype=np.float64)
            o, d = generate_rays_batch(cam, width, height, px,
                                       np.full(width, float(py)),
                                       np.full(width, 0.5), np.full(width, 0.5),
                                       np.zeros(width), np.zeros(width))
            out[i] = ray_cast_batch(scene, o, d, cfg)
            continue

        pix = np.repeat(np.arange(width, dtype=np.int64) + py * width, spp)
        samp = np.tile(np.arange(sample_offset, sample_offset + spp,
                                 dtype=np.int64), width)
        jx = uniform(seed, frame, pix, samp, rng_mod.DIM_JITTER_X)
        jy = uniform(seed, frame, pix, samp, rng_mod.DIM_JITTER_Y)
        lu = uniform(seed, frame, pix, samp, rng_mod.DIM_LENS_U)
        lv = uniform(seed, frame, pix, samp, rng_mod.DIM_LENS_V)
        pxf = (pix % width).astype(np.float64)
        pyf = np.full(len(pix), float(py))

        if track is not None and frame_duration > 0.0:
            ut = uniform(seed, frame, pix, samp, rng_mod.DIM_TIME)
            base = interpolate_track(track, frame_time).camera
            t0, t1 = base.shutter
            if t1 > t0:
                times = frame_time + (t0 + ut * (t1 - t0)) * frame_duration
                pose = _track_pose_arrays(track, times)
                o, d = _rays_from_frames(
                    pose["pos"], pose["fwd"], pose["right"], pose["up"],
                    pose["vfov_deg"], pose["aperture"], pose["focal"],
                    width, height, pxf, pyf, jx, jy, lu, lv)
            else:
                cam_t = interpolate_track(
                    track, frame_time + t0 * frame_duration).camera
                o, d = generate_rays_batch(cam_t, width, height, pxf, pyf,
                                           jx, jy, lu, lv)
        else:
            o, d = generate_rays_batch(cam, width, height, pxf, pyf,
                                       jx, jy, lu, lv)

        lanes = LaneRng(seed, frame, pix, samp)
        rad = path_trace_batch(scene, o, d, cfg, lanes)
        out[i] = rad.reshape(width, spp, 3).mean(axis=1)
    return out


_POOL_STATE: dict = {}


def _pool_init(args):
    _POOL_STATE["args"] = args


def _pool_rows(rows):
    return _render_rows(*_POOL_STATE["args"], rows)


def render_pass(scene: Scene, cam: Camera, buf: AccumulationBuffer,
                spp: int, cfg: PathTracerConfig | None = None, seed: int = 0,
                frame: int = 0, sample_offset: int | None = None,
                threads: int = 1, integrator: str = "pathtrace",
                track: AnimationTrack | None = None, frame_time: float = 0.0,
                frame_duration: float = 0.0) -> AccumulationBuffer:
    """Render spp new samples per pixel and fold them into the buffer."""
    if spp < 1:
        raise ValueError("spp must be >= 1")
    if integrator not in ("pathtrace", "raycast"):
        raise ValueError(f"unknown integrator {integrator!r}")
    cfg = cfg or PathTracerConfig()
    if sample_offset is None:
        sample_offset = buf.count
    args = (scene, cam, buf.width, buf.height, spp, cfg, seed, frame,
            sample_offset, integrator, track, frame_time, frame_duration)
    rows = list(range(buf.height))
    pass_img = np.zeros((buf.height, buf.width, 3), dtype=np.float64)
    if threads <= 1:
        pass_img[rows] = _render_rows(*args, rows)
    else:
        chunks = [rows[i::threads] for i in range(threads)]
        ctx = multiprocessing.get_context("fork")
        with concurrent.futures.ProcessPoolExecutor(
                max_workers=threads, mp_context=ctx,
                initializer=_pool_init, initargs=(args,)) as pool:
            for chunk, res in zip(chunks, pool.map(_pool_rows, chunks)):
                pass_img[chunk] = res
    return accumulate(buf, pass_img, 1 if integrator == "raycast" else spp)


def render_frame(scene: Scene, cam: Camera, width: int, height: int,
                 spp: int, cfg: PathTracerConfig | None = None, seed: int = 0,
                 frame: int = 0, threads: int = 1,
                 integrator: str = "pathtrace",
                 track: AnimationTrack | None = None, frame_time: float = 0.0,
                 frame_duration: float = 0.0) -> AccumulationBuffer:
    """Render a fresh frame of spp samples per pixel; deterministic per
    (seed, frame) regardless of thread count."""
    buf = AccumulationBuffer.create(width, height)
    return render_pass(scene, cam, buf, spp, cfg, seed, frame,
                       sample_offset=0, threads=threads, integrator=integrator,
                       track=track, frame_time=frame_time,
                       frame_duration=frame_duration)
