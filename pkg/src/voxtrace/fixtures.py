"""Canonical test fixtures.

The slab geometry is sized so its trilinear density profile integrates
to exactly 1 mm of unit optical depth: interior x-slices of ones padded
by zero slices give a trapezoid whose area is (#ones) * spacing. With
transfer functions linear through the origin, the Beer-Lambert and
emission closed forms then hold exactly for any reconstruction, which
is what the analytic oracles rely on.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import assets
from .film import AnimationTrack, Camera, Keyframe, default_camera
from .integrate import Ray, Scene
from .lighting import EnvironmentLight, make_synthetic_env, save_env
from .optics import EmissionOverlay, OpticalProperties, TransferFunction
from .volume import make_synthetic_volume, save_volume

SLAB_DIMS = (6, 5, 5)
SLAB_SPACING = (0.25, 0.25, 0.25)
SLAB_DEPTH_MM = (SLAB_DIMS[0] - 2) * SLAB_SPACING[0]  # 1.0

GRID_DIMS = (32, 32, 32)
GRID_SPACING = (1.0, 1.0, 1.0)


def slab_volume():
    return make_synthetic_volume("slab", SLAB_DIMS, SLAB_SPACING)


def sphere_volume(dims=GRID_DIMS, spacing=GRID_SPACING):
    return make_synthetic_volume("sphere", dims, spacing)


def shell_volume(dims=GRID_DIMS, spacing=GRID_SPACING):
    return make_synthetic_volume("shell", dims, spacing)


def ramp_volume(dims=GRID_DIMS, spacing=GRID_SPACING):
    return make_synthetic_volume("ramp", dims, spacing)


def two_spheres_volume(dims=GRID_DIMS, spacing=GRID_SPACING):
    return make_synthetic_volume("two-spheres", dims, spacing)


def _zero_props():
    return OpticalProperties(0.0, 0.0, (0.0, 0.0, 0.0), 0.0, (0.0, 0.0, 0.0))


def vacuum_tf():
    return TransferFunction([(0.0, _zero_props()), (1.0, _zero_props())])


def absorber_tf(sigma_a: float = 1.0):
    top = OpticalProperties(0.0, sigma_a, (0.0, 0.0, 0.0), 0.0, (0.0, 0.0, 0.0))
    return TransferFunction([(0.0, _zero_props()), (1.0, top)])


def emissive_tf(sigma_a: float = 1.0, q_e: float = 1.0):
    top = OpticalProperties(0.0, sigma_a, (0.0, 0.0, 0.0), 0.0, (q_e,) * 3)
    return TransferFunction([(0.0, _zero_props()), (1.0, top)])


def scatter_tf(sigma_s: float = 1.0, g: float = 0.0,
               albedo=(1.0, 1.0, 1.0)):
    top = OpticalProperties(sigma_s, 0.0, tuple(albedo), g, (0.0, 0.0, 0.0))
    return TransferFunction([(0.0, _zero_props()), (1.0, top)])


def tissue_tf():
    """Colored scattering/absorbing map with surface shading, for demos."""
    mid = OpticalProperties(0.6, 0.08, (0.9, 0.45, 0.35), 0.55, (0.0, 0.0, 0.0))
    top = OpticalProperties(2.5, 0.25, (0.95, 0.9, 0.82), 0.3, (0.0, 0.0, 0.0))
    return TransferFunction(
        [(0.0, _zero_props()), (0.35, mid), (1.0, top)],
        surface_gradient_threshold=0.25, surface_roughness=0.45)


def constant_env(value: float = 1.0, width: int = 8, height: int = 4):
    return make_synthetic_env("constant", width, height, {"intensity": value})


def black_env(width: int = 8, height: int = 4):
    return make_synthetic_env("constant", width, height, {"intensity": 0.0})


def three_point_env(width: int = 64, height: int = 32):
    return make_synthetic_env("three-point", width, height)


def sun_sky_env(width: int = 64, height: int = 32):
    return make_synthetic_env("sun-sky", width, height)


def single_texel_env(width: int = 16, height: int = 8,
                     value: float = 40.0) -> EnvironmentLight:
    img = np.zeros((height, width, 3), dtype=np.float32)
    img[height // 3, width // 3] = value
    return EnvironmentLight(img)


def glow_overlay():
    """Yellow emissive overlay over the two-spheres field."""
    vol = two_spheres_volume()
    cmap = [(0.0, (0.0, 0.0, 0.0)), (0.6, (0.4, 0.3, 0.0)),
            (1.0, (6.0, 5.0, 0.6))]
    return EmissionOverlay(vol, cmap, strength=1.0)


def slab_axis_ray() -> Ray:
    """Ray down the slab's x axis through the box center."""
    cy = (SLAB_DIMS[1] - 1) * SLAB_SPACING[1] / 2.0
    cz = (SLAB_DIMS[2] - 1) * SLAB_SPACING[2] / 2.0
    return Ray((-1.0, cy, cz), (1.0, 0.0, 0.0))


def slab_camera() -> Camera:
    r = slab_axis_ray()
    return Camera(position=r.origin,
                  target=(4.0, r.origin[1], r.origin[2]),
                  up=(0.0, 0.0, 1.0), vfov_deg=0.05, focal_distance=2.0)


def emissive_slab_scene() -> Scene:
    return Scene(slab_volume(), emissive_tf(), black_env())


def absorber_slab_scene(env_value: float = 1.0) -> Scene:
    return Scene(slab_volume(), absorber_tf(), constant_env(env_value))


def sphere_scene(density_scale: float = 0.5) -> Scene:
    return Scene(sphere_volume(), scatter_tf(), three_point_env(),
                 density_scale=density_scale)


def shell_scene(density_scale: float = 1.0) -> Scene:
    return Scene(shell_volume(), scatter_tf(), constant_env(),
                 density_scale=density_scale)


def scene_by_name(name: str) -> Scene:
    builders = {
        "emissive_slab": emissive_slab_scene,
        "absorber_slab": absorber_slab_scene,
        "sphere": sphere_scene,
        "shell": shell_scene,
    }
    if name not in builders:
        raise KeyError(f"unknown fixture scene {name!r}; "
                       f"have {sorted(builders)}")
    return builders[name]()


def orbit_track(volume=None) -> AnimationTrack:
    vol = volume if volume is not None else sphere_volume()
    lo, hi = vol.bbox
    center = (lo + hi) / 2.0
    radius = 2.2 * float(np.linalg.norm(hi - lo))
    keys = []
    for i, az in enumerate((0.0, 0.5 * np.pi, np.pi)):
        eye = center + radius * np.array([np.cos(az), np.sin(az), 0.35])
        keys.append(Keyframe(float(i), Camera(
            position=tuple(eye), target=tuple(center), up=(0.0, 0.0, 1.0),
            focal_distance=radius)))
    return AnimationTrack(keys)


def write_fixtures(out_dir) -> list[str]:
    """Write every canonical asset; deterministic and idempotent."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    volumes = {
        "slab": slab_volume(), "sphere": sphere_volume(),
        "shell": shell_volume(), "ramp": ramp_volume(),
        "two_spheres": two_spheres_volume(),
    }
    for name, vol in volumes.items():
        save_volume(vol, out / f"{name}.volume.json")
        written.append(f"{name}.volume.json")

    tfs = {
        "vacuum": vacuum_tf(), "absorber": absorber_tf(),
        "emissive": emissive_tf(), "scatter_white": scatter_tf(),
        "tissue": tissue_tf(),
    }
    for name, tf in tfs.items():
        assets.save_tf(tf, out / f"{name}.tf.json")
        written.append(f"{name}.tf.json")

    envs = {
        "constant": constant_env(), "black": black_env(),
        "three_point": three_point_env(), "sun_sky": sun_sky_env(),
        "single_texel": single_texel_env(),
    }
    for name, env in envs.items():
        save_env(env, out / f"{name}.env.pfm")
        written.append(f"{name}.env.pfm")

    cameras = {
        "slab_axis": slab_camera(),
        "sphere_default": default_camera(volumes["sphere"]),
    }
    for name, cam in cameras.items():
        assets.save_camera(cam, out / f"{name}.camera.json")
        written.append(f"{name}.camera.json")

    assets.save_track(orbit_track(volumes["sphere"]), out / "orbit.track.json")
    written.append("orbit.track.json")

    overlay_doc = {
        "volume": "two_spheres.volume.json",
        "colormap": [{"v": v, "rgb": list(rgb)} for v, rgb in
                     glow_overlay().colormap],
        "strength": 1.0,
    }
    assets._dump(overlay_doc, out / "glow.overlay.json")
    written.append("glow.overlay.json")

    scenes = {
        "emissive_slab": {"volume": "slab", "tf": "emissive", "env": "black",
                          "density_scale": 1.0},
        "absorber_slab": {"volume": "slab", "tf": "absorber", "env": "constant",
                          "density_scale": 1.0},
        "sphere": {"volume": "sphere", "tf": "scatter_white",
                   "env": "three_point", "density_scale": 0.5},
        "shell": {"volume": "shell", "tf": "scatter_white", "env": "constant",
                  "density_scale": 1.0},
        "gout": {"volume": "sphere", "tf": "tissue", "env": "sun_sky",
                 "overlay": "glow", "density_scale": 1.0},
    }
    for name, doc in scenes.items():
        assets._dump(doc, out / f"{name}.scene.json")
        written.append(f"{name}.scene.json")
    return sorted(written)
