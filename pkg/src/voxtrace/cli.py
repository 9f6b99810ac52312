"""Command line interface: offline rendering, animation baking,
benchmarking, fixture generation, and the render service.

Exit codes: 0 ok, 1 user error (bad flags, missing or invalid inputs),
2 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import sys
import time
import traceback
from pathlib import Path

import numpy as np
from PIL import Image

from . import assets, fixtures, pfm
from .film import interpolate_track, render_frame, tone_map
from .integrate import PathTracerConfig, Scene


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="voxtrace", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("render", help="render one frame to an image file")
    r.add_argument("--volume", required=True, help="volume descriptor JSON")
    r.add_argument("--tf", required=True, help="transfer function JSON")
    r.add_argument("--env", required=True, help="environment PFM")
    r.add_argument("--camera", required=True, help="camera JSON")
    r.add_argument("--overlay", help="emission overlay JSON")
    r.add_argument("--spp", type=int, default=64)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True, help="output .pfm or .png")
    r.add_argument("--integrator", choices=("raycast", "pathtrace"),
                   default="pathtrace")
    r.add_argument("--width", type=int, default=256)
    r.add_argument("--height", type=int, default=256)
    r.add_argument("--threads", type=int, default=1)
    r.add_argument("--frame-index", type=int, default=0)
    r.add_argument("--density-scale", type=float, default=1.0)
    r.add_argument("--max-bounces", type=int, default=64)
    r.add_argument("--steps", type=int, default=256,
                   help="ray caster step count")
    r.set_defaults(func=cmd_render)

    a = sub.add_parser("animate", help="bake a keyframe track to frames")
    a.add_argument("--volume", required=True)
    a.add_argument("--tf", required=True)
    a.add_argument("--env", required=True)
    a.add_argument("--track", required=True, help="keyframe track JSON")
    a.add_argument("--fps", type=float, default=24.0)
    a.add_argument("--spp", type=int, default=16)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out-dir", required=True)
    a.add_argument("--format", choices=("pfm", "png"), default="pfm")
    a.add_argument("--width", type=int, default=256)
    a.add_argument("--height", type=int, default=256)
    a.add_argument("--threads", type=int, default=1)
    a.add_argument("--density-scale", type=float, default=1.0)
    a.set_defaults(func=cmd_animate)

    b = sub.add_parser("bench", help="render a fixture scene and report throughput")
    b.add_argument("--scene", required=True, help="fixture scene name")
    b.add_argument("--spp", type=int, default=16)
    b.add_argument("--threads", type=int, default=1)
    b.add_argument("--width", type=int, default=128)
    b.add_argument("--height", type=int, default=128)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bench)

    m = sub.add_parser("make-fixtures", help="write the canonical test assets")
    m.add_argument("out_dir")
    m.set_defaults(func=cmd_make_fixtures)

    s = sub.add_parser("serve", help="run the progressive render service")
    s.add_argument("--port", type=int, default=8000)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--assets", help="asset directory (default: RENDER_ASSET_DIR)")
    s.set_defaults(func=cmd_serve)
    return p


def _load_scene(args) -> Scene:
    from .lighting import load_env
    from .volume import load_volume

    volume = load_volume(args.volume)
    tf = assets.load_tf(args.tf)
    env = load_env(args.env)
    overlay = assets.load_overlay(args.overlay) if getattr(args, "overlay", None) \
        else None
    return Scene(volume, tf, env, overlay=overlay,
                 density_scale=args.density_scale)


def _write_image(buf, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".pfm":
        pfm.write_pfm(path, buf.mean.astype(np.float32))
    elif path.suffix == ".png":
        Image.fromarray(tone_map(buf, 0.0)).save(path)
    else:
        raise UsageError(f"unsupported output extension {path.suffix!r}")


def cmd_render(args) -> int:
    scene = _load_scene(args)
    cam = assets.load_camera(args.camera)
    cfg = PathTracerConfig(max_bounces=args.max_bounces,
                           step_count_raycast=args.steps)
    buf = render_frame(scene, cam, args.width, args.height, args.spp, cfg,
                       seed=args.seed, frame=args.frame_index,
                       threads=args.threads, integrator=args.integrator)
    out = Path(args.out)
    if buf is not None:
        # tone mapping uses the camera's exposure for PNG output
        if out.suffix == ".png":
            out.parent.mkdir(parents=True, exist_ok=True)
            Image.fromarray(tone_map(buf, cam.exposure_ev)).save(out)
        else:
            _write_image(buf, out)
    return 0


def cmd_animate(args) -> int:
    scene = _load_scene(args)
    track = assets.load_track(args.track)
    fps = args.fps
    if fps <= 0:
        raise UsageError("--fps must be > 0")
    n_frames = int(round(track.duration * fps)) + 1
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i in range(n_frames):
        t = i / fps
        cam = interpolate_track(track, t).camera
        buf = render_frame(scene, cam, args.width, args.height, args.spp,
                           seed=args.seed, frame=i, threads=args.threads,
                           track=track, frame_time=t, frame_duration=1.0 / fps)
        _write_image(buf, out_dir / f"frame_{i:04d}.{args.format}")
    print(json.dumps({"frames": n_frames, "out_dir": str(out_dir)}))
    return 0


def cmd_bench(args) -> int:
    try:
        scene = fixtures.scene_by_name(args.scene)
    except KeyError as e:
        raise UsageError(str(e)) from e
    cam = None
    from .film import default_camera
    cam = default_camera(scene.volume)
    start = time.perf_counter()
    buf = render_frame(scene, cam, args.width, args.height, args.spp,
                       seed=args.seed, threads=args.threads)
    elapsed = time.perf_counter() - start
    data = pfm.pfm_bytes(buf.mean.astype(np.float32))
    report = {
        "scene": args.scene,
        "spp": args.spp,
        "threads": args.threads,
        "width": args.width,
        "height": args.height,
        "samples_per_second": args.width * args.height * args.spp / elapsed,
        "per_pass_seconds": elapsed,
        "image_hash": hashlib.sha256(data).hexdigest(),
    }
    print(json.dumps(report))
    return 0


def cmd_make_fixtures(args) -> int:
    written = fixtures.write_fixtures(args.out_dir)
    print(json.dumps({"out_dir": str(args.out_dir), "files": written}))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.assets)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (FileNotFoundError, KeyError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
