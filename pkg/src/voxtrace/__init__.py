"""voxtrace: progressive physically-based volume rendering of voxel data.

Monte Carlo path tracing over scalar volumes with delta tracking,
HDR image-based lighting, transfer-function classification, emissive
overlays, a thin-lens animated camera, plus a deterministic
emission-absorption ray caster for reference renders.
"""

from .film import (AccumulationBuffer, AnimationTrack, Camera, Keyframe,
                   accumulate, default_camera, generate_ray, interpolate_track,
                   render_frame, render_pass, tone_map)
from .integrate import (FreeFlight, PathTracerConfig, Ray, Scene,
                        estimate_majorant, path_trace_batch, path_trace_sample,
                        ray_cast, ray_cast_batch, sample_free_flight,
                        transmittance_analytic)
from .lighting import (EnvironmentLight, env_eval, env_pdf, env_sample,
                       load_env, make_synthetic_env, save_env)
from .optics import (EmissionOverlay, OpticalProperties, TransferFunction,
                     classify, emission_at, eval_brdf, hg_phase, sample_hg)
from .rng import LaneRng, RngStream
from .volume import (ScalarVolume, gradient, load_volume,
                     make_synthetic_volume, sample_trilinear, save_volume)

__version__ = "0.1.0"
