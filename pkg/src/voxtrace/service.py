"""Session-based progressive render service.

HTTP controls sessions (create/patch/snapshot/delete); one WebSocket
per session streams frames as binary messages: a little-endian u32
header length, a JSON header {revision, count, width, height, encoding,
byte_length}, then the payload bytes. Any state edit bumps the session
revision and restarts accumulation; a frame is enqueued under the
session lock only if its revision is still current, so subscribers
never see a stale revision after a newer one.
"""

from __future__ import annotations

import asyncio
import dataclasses
import io
import json
import os
import queue
import struct
import threading
import time
import uuid

import numpy as np
from fastapi import Body, FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, Response
from PIL import Image

from . import assets as assets_mod
from . import pfm
from .assets import AssetRegistry, camera_from_json, camera_to_json, tf_from_json, tf_to_json
from .film import AccumulationBuffer, accumulate, default_camera, render_pass, tone_map
from .integrate import PathTracerConfig, Scene

FRAME_STRIDE = 1 << 20


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse({"error": {"code": code, "message": message}},
                        status_code=status)


def png8_bytes(buf: AccumulationBuffer, exposure_ev: float) -> bytes:
    img = tone_map(buf, exposure_ev)
    out = io.BytesIO()
    Image.fromarray(img).save(out, format="PNG")
    return out.getvalue()


class RenderSession:
    def __init__(self, sid: str, registry: AssetRegistry, volume_id: str,
                 tf_id: str, env_id: str, width: int, height: int,
                 overlay_id: str | None = None, seed: int = 0,
                 pass_spp: int = 1, integrator: str = "pathtrace",
                 max_samples: int = 1024):
        self.id = sid
        self.registry = registry
        volume = registry.volume(volume_id)
        self.tf = registry.tf(tf_id)
        self.env = registry.env(env_id)
        self.overlay = registry.overlay(overlay_id) if overlay_id else None
        self.scene = Scene(volume, self.tf, self.env, overlay=self.overlay)
        self.camera = default_camera(volume)
        self.cfg = PathTracerConfig()
        self.integrator = integrator
        self.width = width
        self.height = height
        self.seed = int(seed)
        self.pass_spp = max(1, int(pass_spp))
        self.max_samples = 1 if integrator == "raycast" else int(max_samples)
        self.buffer = AccumulationBuffer.create(width, height)
        self.revision = 0
        self.paused = False
        self.closed = False
        self.lock = threading.Lock()
        self._subscribers: list[tuple[queue.Queue, str]] = []
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    # -- render loop -------------------------------------------------------

    def _loop(self):
        while True:
            with self.lock:
                if self.closed:
                    return
                if self.paused or self.buffer.count >= self.max_samples:
                    snap = None
                else:
                    snap = (self.revision, self.scene, self.camera, self.cfg,
                            self.buffer.count)
            if snap is None:
                time.sleep(0.02)
                continue
            rev, scene, cam, cfg, count = snap
            pass_index = count // self.pass_spp
            frame = rev * FRAME_STRIDE + pass_index
            scratch = AccumulationBuffer.create(self.width, self.height)
            render_pass(scene, cam, scratch, self.pass_spp, cfg,
                        seed=self.seed, frame=frame, sample_offset=count,
                        integrator=self.integrator)
            with self.lock:
                if self.closed or rev != self.revision:
                    continue
                accumulate(self.buffer, scratch.mean, scratch.count)
                self._emit_locked()

    def _emit_locked(self):
        if not self._subscribers:
            return
        payloads: dict[str, bytes] = {}
        for q, enc in self._subscribers:
            if enc not in payloads:
                if enc == "pfm":
                    payloads[enc] = pfm.pfm_bytes(self.buffer.mean)
                else:
                    payloads[enc] = png8_bytes(self.buffer, self.camera.exposure_ev)
            header = {"revision": self.revision, "count": self.buffer.count,
                      "width": self.width, "height": self.height,
                      "encoding": enc, "byte_length": len(payloads[enc])}
            q.put((header, payloads[enc]))

    # -- control -----------------------------------------------------------

    def subscribe(self, encoding: str) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self.lock:
            self._subscribers.append((q, encoding))
        return q

    def unsubscribe(self, q: queue.Queue):
        with self.lock:
            self._subscribers = [(s, e) for s, e in self._subscribers if s is not q]

    def update(self, patch: dict) -> int:
        with self.lock:
            if self.closed:
                raise KeyError(self.id)
            if "camera" in patch:
                self.camera = camera_from_json(patch["camera"])
            if "tf" in patch:
                self.tf = tf_from_json(patch["tf"])
                self.scene = Scene(self.scene.volume, self.tf, self.env,
                                   overlay=self.overlay,
                                   density_scale=self.scene.density_scale)
            if "exposure_ev" in patch:
                self.camera = dataclasses.replace(
                    self.camera, exposure_ev=float(patch["exposure_ev"]))
            if "cfg" in patch:
                self.cfg = dataclasses.replace(self.cfg, **patch["cfg"])
            if "paused" in patch:
                self.paused = bool(patch["paused"])
            self.revision += 1
            self.buffer = AccumulationBuffer.create(self.width, self.height)
            return self.revision

    def snapshot(self, fmt: str) -> bytes:
        with self.lock:
            buf = self.buffer.copy()
            ev = self.camera.exposure_ev
        if fmt == "pfm":
            return pfm.pfm_bytes(buf.mean)
        return png8_bytes(buf, ev)

    def state(self) -> dict:
        with self.lock:
            return {
                "id": self.id, "revision": self.revision,
                "count": self.buffer.count, "width": self.width,
                "height": self.height, "paused": self.paused,
                "pass_spp": self.pass_spp, "max_samples": self.max_samples,
                "camera": camera_to_json(self.camera),
                "tf": tf_to_json(self.tf),
                "exposure_ev": self.camera.exposure_ev,
            }

    def close(self):
        with self.lock:
            self.closed = True
            for q, _ in self._subscribers:
                q.put(None)
            self._subscribers = []


def create_app(asset_dir: str | None = None, max_samples: int = 1024) -> FastAPI:
    root = asset_dir or os.environ.get("RENDER_ASSET_DIR")
    if not root:
        raise ValueError("no asset directory: pass asset_dir or set RENDER_ASSET_DIR")
    registry = AssetRegistry(root)
    sessions: dict[str, RenderSession] = {}
    app = FastAPI(title="voxtrace render service")
    app.state.registry = registry
    app.state.sessions = sessions

    @app.get("/assets")
    def list_assets():
        return registry.listing()

    @app.post("/sessions", status_code=201)
    def create_session(body: dict = Body(...)):
        width = int(body.get("width", 0))
        height = int(body.get("height", 0))
        if width < 1 or height < 1 or width * height > 4096 * 4096:
            return _error(422, "invalid_dimensions",
                          f"invalid image size {width}x{height}")
        try:
            sid = uuid.uuid4().hex
            session = RenderSession(
                sid, registry,
                volume_id=body["volume_id"], tf_id=body["tf_id"],
                env_id=body["env_id"], width=width, height=height,
                overlay_id=body.get("overlay_id"),
                seed=int(body.get("seed", 0)),
                pass_spp=int(body.get("pass_spp", 1)),
                integrator=body.get("integrator", "pathtrace"),
                max_samples=int(body.get("max_samples", max_samples)))
        except KeyError as e:
            return _error(404, "asset_not_found", str(e))
        except (ValueError, TypeError) as e:
            return _error(422, "malformed_patch", str(e))
        sessions[sid] = session
        return {"session_id": sid, "revision": 0}

    def _get(sid: str) -> RenderSession | None:
        s = sessions.get(sid)
        if s is None or s.closed:
            return None
        return s

    @app.get("/sessions/{sid}")
    def session_state(sid: str):
        s = _get(sid)
        if s is None:
            return _error(404, "session_not_found", sid)
        return s.state()

    @app.patch("/sessions/{sid}")
    def patch_session(sid: str, body: dict = Body(...)):
        s = _get(sid)
        if s is None:
            return _error(404, "session_not_found", sid)
        allowed = {"camera", "tf", "exposure_ev", "cfg", "paused"}
        if not set(body) <= allowed:
            return _error(422, "malformed_patch",
                          f"unknown fields {sorted(set(body) - allowed)}")
        try:
            rev = s.update(body)
        except KeyError:
            return _error(404, "session_not_found", sid)
        except (ValueError, TypeError) as e:
            return _error(422, "malformed_patch", str(e))
        return {"revision": rev}

    @app.get("/sessions/{sid}/snapshot")
    def snapshot(sid: str, fmt: str = "png8"):
        s = _get(sid)
        if s is None:
            return _error(404, "session_not_found", sid)
        if fmt not in ("png8", "pfm"):
            return _error(422, "malformed_patch", f"unknown format {fmt!r}")
        data = s.snapshot(fmt)
        media = "image/png" if fmt == "png8" else "application/octet-stream"
        return Response(content=data, media_type=media)

    @app.delete("/sessions/{sid}")
    def delete_session(sid: str):
        s = _get(sid)
        if s is None:
            return _error(404, "session_not_found", sid)
        s.close()
        del sessions[sid]
        return {"closed": True}

    @app.websocket("/sessions/{sid}/frames")
    async def frames(ws: WebSocket, sid: str, encoding: str = "png8"):
        s = _get(sid)
        if s is None or encoding not in ("png8", "pfm"):
            await ws.close(code=4404)
            return
        await ws.accept()
        q = s.subscribe(encoding)
        loop = asyncio.get_event_loop()
        gone = asyncio.Event()

        async def watch_disconnect():
            try:
                while True:
                    msg = await ws.receive()
                    if msg["type"] == "websocket.disconnect":
                        break
            except Exception:
                pass
            gone.set()

        def poll():
            try:
                return q.get(timeout=0.25)
            except queue.Empty:
                return poll_again

        poll_again = object()
        watcher = asyncio.create_task(watch_disconnect())
        try:
            while not gone.is_set():
                item = await loop.run_in_executor(None, poll)
                if item is poll_again:
                    continue
                if item is None:
                    header = {"revision": s.revision, "count": s.buffer.count,
                              "width": s.width, "height": s.height,
                              "encoding": "close", "byte_length": 0}
                    await ws.send_bytes(frame_message(header, b""))
                    await ws.close(code=1000)
                    return
                header, payload = item
                await ws.send_bytes(frame_message(header, payload))
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            watcher.cancel()
            s.unsubscribe(q)

    return app


def frame_message(header: dict, payload: bytes) -> bytes:
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    return struct.pack("<I", len(head)) + head + payload


def parse_frame_message(data: bytes) -> tuple[dict, bytes]:
    (n,) = struct.unpack_from("<I", data, 0)
    header = json.loads(data[4:4 + n].decode("utf-8"))
    return header, data[4 + n:]
