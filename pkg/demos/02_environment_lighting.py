"""
Image-based lighting with synthetic HDR environments
====================================================

The same volume under three lighting environments. Environment maps
are lat-long HDR images; the renderer importance-samples them in
proportion to luminance times sin(latitude), which is what keeps the
noise low even when most of the light comes from a small sun disk.
"""

from pathlib import Path

import numpy as np
from PIL import Image

from voxtrace import fixtures
from voxtrace.film import default_camera, render_frame, tone_map
from voxtrace.integrate import Scene

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

volume = fixtures.sphere_volume()
tf = fixtures.tissue_tf()
cam = default_camera(volume)

envs = {
    "constant": fixtures.constant_env(0.8),
    "three_point": fixtures.three_point_env(),
    "sun_sky": fixtures.sun_sky_env(),
}

panels = []
for name, env in envs.items():
    scene = Scene(volume, tf, env, density_scale=0.35)
    buf = render_frame(scene, cam, 128, 128, spp=48, seed=2)
    panels.append(tone_map(buf, 0.0))
    print(f"{name}: done")

Image.fromarray(np.concatenate(panels, axis=1)).save(out_dir / "environments.png")
print("wrote", out_dir / "environments.png", "| panels:", " | ".join(envs))
