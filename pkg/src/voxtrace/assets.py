"""Asset JSON schemas and the on-disk registry used by the CLI and service.

A registry directory holds flat files named <id>.<kind>.<ext>:
volumes (<id>.volume.json + raw), transfer functions (<id>.tf.json),
environments (<id>.env.pfm), overlays (<id>.overlay.json), cameras
(<id>.camera.json), tracks (<id>.track.json), scenes (<id>.scene.json).
"""

from __future__ import annotations

import json
from pathlib import Path

from .film import AnimationTrack, Camera, Keyframe
from .integrate import Scene
from .lighting import EnvironmentLight, load_env
from .optics import EmissionOverlay, OpticalProperties, TransferFunction
from .volume import ScalarVolume, load_volume


def tf_to_json(tf: TransferFunction) -> dict:
    return {
        "points": [
            {"v": v, "sigma_s": p.sigma_s, "sigma_a": p.sigma_a,
             "albedo": list(p.albedo_color), "g": p.g, "q_e": list(p.q_e)}
            for v, p in tf.points
        ],
        "surface_gradient_threshold": tf.surface_gradient_threshold,
        "surface_roughness": tf.surface_roughness,
    }


def tf_from_json(doc: dict) -> TransferFunction:
    points = [
        (pt["v"], OpticalProperties(
            sigma_s=float(pt["sigma_s"]), sigma_a=float(pt["sigma_a"]),
            albedo_color=tuple(pt["albedo"]), g=float(pt["g"]),
            q_e=tuple(pt["q_e"])))
        for pt in doc["points"]
    ]
    return TransferFunction(points,
                            float(doc.get("surface_gradient_threshold", 0.0)),
                            float(doc.get("surface_roughness", 1.0)))


def load_tf(path) -> TransferFunction:
    with open(path) as f:
        return tf_from_json(json.load(f))


def save_tf(tf: TransferFunction, path) -> None:
    _dump(tf_to_json(tf), path)


def camera_to_json(cam: Camera) -> dict:
    return {
        "position": list(cam.position), "target": list(cam.target),
        "up": list(cam.up), "vfov_deg": cam.vfov_deg,
        "aperture_radius_mm": cam.aperture_radius,
        "focal_distance_mm": cam.focal_distance,
        "exposure_ev": cam.exposure_ev, "shutter": list(cam.shutter),
    }


def camera_from_json(doc: dict) -> Camera:
    return Camera(
        position=tuple(doc["position"]), target=tuple(doc["target"]),
        up=tuple(doc.get("up", (0.0, 0.0, 1.0))),
        vfov_deg=float(doc.get("vfov_deg", 40.0)),
        aperture_radius=float(doc.get("aperture_radius_mm", 0.0)),
        focal_distance=float(doc.get("focal_distance_mm", 100.0)),
        exposure_ev=float(doc.get("exposure_ev", 0.0)),
        shutter=tuple(doc.get("shutter", (0.0, 0.0))),
    )


def load_camera(path) -> Camera:
    with open(path) as f:
        return camera_from_json(json.load(f))


def save_camera(cam: Camera, path) -> None:
    _dump(camera_to_json(cam), path)


def track_to_json(track: AnimationTrack) -> dict:
    return {"keyframes": [
        {"time_s": k.time, "camera": camera_to_json(k.camera),
         **({"tf_id": k.tf_id} if k.tf_id else {}),
         **({"env_id": k.env_id} if k.env_id else {})}
        for k in track.keyframes
    ]}


def track_from_json(doc: dict) -> AnimationTrack:
    return AnimationTrack([
        Keyframe(float(k["time_s"]), camera_from_json(k["camera"]),
                 k.get("tf_id"), k.get("env_id"))
        for k in doc["keyframes"]
    ])


def load_track(path) -> AnimationTrack:
    with open(path) as f:
        return track_from_json(json.load(f))


def save_track(track: AnimationTrack, path) -> None:
    _dump(track_to_json(track), path)


def load_overlay(path) -> EmissionOverlay:
    path = Path(path)
    with open(path) as f:
        doc = json.load(f)
    vol = load_volume(path.parent / doc["volume"])
    cmap = [(pt["v"], tuple(pt["rgb"])) for pt in doc["colormap"]]
    return EmissionOverlay(vol, cmap, float(doc.get("strength", 1.0)))


def _dump(doc: dict, path) -> None:
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


class AssetRegistry:
    """Resolve asset ids to loaded objects inside one directory."""

    KINDS = ("volume", "tf", "env", "overlay", "camera", "track", "scene")

    def __init__(self, root):
        self.root = Path(root)
        if not self.root.is_dir():
            raise FileNotFoundError(f"asset directory {self.root} does not exist")

    def _path(self, kind: str, asset_id: str) -> Path:
        ext = "pfm" if kind == "env" else "json"
        p = self.root / f"{asset_id}.{kind}.{ext}"
        if not p.exists():
            raise KeyError(f"unknown {kind} asset {asset_id!r}")
        return p

    def ids(self, kind: str) -> list[str]:
        ext = "pfm" if kind == "env" else "json"
        suffix = f".{kind}.{ext}"
        return sorted(p.name[:-len(suffix)] for p in self.root.glob(f"*{suffix}"))

    def listing(self) -> dict:
        return {
            "volumes": self.ids("volume"),
            "transfer_functions": self.ids("tf"),
            "environments": self.ids("env"),
            "overlays": self.ids("overlay"),
            "cameras": self.ids("camera"),
            "tracks": self.ids("track"),
            "scenes": self.ids("scene"),
        }

    def volume(self, asset_id: str) -> ScalarVolume:
        return load_volume(self._path("volume", asset_id))

    def tf(self, asset_id: str) -> TransferFunction:
        return load_tf(self._path("tf", asset_id))

    def env(self, asset_id: str) -> EnvironmentLight:
        return load_env(self._path("env", asset_id))

    def overlay(self, asset_id: str) -> EmissionOverlay:
        return load_overlay(self._path("overlay", asset_id))

    def camera(self, asset_id: str) -> Camera:
        return load_camera(self._path("camera", asset_id))

    def track(self, asset_id: str) -> AnimationTrack:
        return load_track(self._path("track", asset_id))

    def scene(self, asset_id: str) -> Scene:
        with open(self._path("scene", asset_id)) as f:
            doc = json.load(f)
        return self.build_scene(doc)

    def build_scene(self, doc: dict) -> Scene:
        overlay = self.overlay(doc["overlay"]) if doc.get("overlay") else None
        return Scene(self.volume(doc["volume"]), self.tf(doc["tf"]),
                     self.env(doc["env"]), overlay=overlay,
                     density_scale=float(doc.get("density_scale", 1.0)))
