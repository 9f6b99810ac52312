"""
Emission-absorption ray casting vs Monte Carlo path tracing
===========================================================

Renders the sphere fixture with both integrators. The ray caster is
deterministic and fast but only knows local illumination; the path
tracer simulates multiple scattering against the HDR environment and
converges to a soft, photographic look as samples accumulate.
"""

from pathlib import Path

import numpy as np
from PIL import Image

from voxtrace import fixtures
from voxtrace.film import default_camera, render_frame, tone_map

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

scene = fixtures.sphere_scene(density_scale=0.5)
cam = default_camera(scene.volume)
size = (128, 128)

# the reference ray caster: one deterministic pass
ray = render_frame(scene, cam, *size, spp=1, integrator="raycast")

# the path tracer at a few sample budgets; watch the noise melt away
panels = [tone_map(ray, 0.5)]
for spp in (4, 32, 128):
    buf = render_frame(scene, cam, *size, spp=spp, seed=1)
    panels.append(tone_map(buf, 0.5))

strip = np.concatenate(panels, axis=1)
Image.fromarray(strip).save(out_dir / "raycast_vs_pathtrace.png")
print("wrote", out_dir / "raycast_vs_pathtrace.png")
print("panels: raycast | pathtrace 4 spp | 32 spp | 128 spp")
