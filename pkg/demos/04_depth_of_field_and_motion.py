"""
Thin-lens depth of field and motion blur
========================================

The virtual camera has a physical aperture and shutter. Opening the
aperture defocuses everything off the focal plane; opening the shutter
while the camera moves along its animation track smears the frame.
Both effects come from the same sampling machinery: each path samples
a lens position and a time.
"""

from pathlib import Path

import numpy as np
from PIL import Image

from voxtrace import fixtures
from voxtrace.film import (AnimationTrack, Camera, Keyframe, default_camera,
                           interpolate_track, render_frame, tone_map)

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

scene = fixtures.sphere_scene(density_scale=0.5)
base = default_camera(scene.volume)
focal = float(np.linalg.norm(np.subtract(base.target, base.position)))

# depth of field: widen the aperture, keep focus on the volume center
panels = []
for aperture in (0.0, 3.0, 9.0):
    cam = Camera(position=base.position, target=base.target, up=base.up,
                 vfov_deg=base.vfov_deg, aperture_radius=aperture,
                 focal_distance=focal)
    buf = render_frame(scene, cam, 128, 128, spp=48, seed=4)
    panels.append(tone_map(buf, 0.5))
Image.fromarray(np.concatenate(panels, axis=1)).save(out_dir / "dof.png")
print("wrote", out_dir / "dof.png", "| apertures 0, 3, 9 mm")

# motion blur: a fast quarter-orbit with the shutter held open
orbit = fixtures.orbit_track(scene.volume)
wide_open = AnimationTrack([
    Keyframe(k.time, Camera(position=k.camera.position, target=k.camera.target,
                            up=k.camera.up, vfov_deg=k.camera.vfov_deg,
                            focal_distance=k.camera.focal_distance,
                            shutter=(0.0, 1.0)))
    for k in orbit.keyframes])
cam = interpolate_track(wide_open, 0.5).camera
buf = render_frame(scene, cam, 128, 128, spp=48, seed=5,
                   track=wide_open, frame_time=0.5, frame_duration=0.6)
Image.fromarray(tone_map(buf, 0.5)).save(out_dir / "motion_blur.png")
print("wrote", out_dir / "motion_blur.png")
