"""
Hyper-realistic emission overlays
=================================

Functional data rendered as visible light: a co-registered overlay
volume drives glowing emission on top of the anatomical scattering
field, the way metabolic or electrical activity can be shown as a
light source inside tissue.
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
env = fixtures.sun_sky_env()
cam = default_camera(volume)

plain = Scene(volume, tf, env, density_scale=0.35)
glowing = Scene(volume, tf, env, overlay=fixtures.glow_overlay(),
                density_scale=0.35)

panels = []
for scene in (plain, glowing):
    buf = render_frame(scene, cam, 128, 128, spp=48, seed=3)
    panels.append(tone_map(buf, 0.0))

Image.fromarray(np.concatenate(panels, axis=1)).save(out_dir / "overlay.png")
print("wrote", out_dir / "overlay.png", "| left: anatomy only, right: +emission")
