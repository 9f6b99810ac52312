"""
Progressive streaming from the render service
=============================================

Boots the HTTP/WebSocket service on a scratch asset directory, opens a
session, and collects frames as the image converges. Every state edit
(camera move, transfer-function change, exposure) bumps the session
revision and restarts accumulation; the stream never delivers a stale
revision after a newer one.
"""

import tempfile
import threading
import time
from pathlib import Path

import httpx
import numpy as np
import uvicorn
from PIL import Image
from websockets.sync.client import connect as ws_connect

from voxtrace import fixtures
from voxtrace.service import create_app, parse_frame_message

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

assets = tempfile.mkdtemp(prefix="voxtrace_assets_")
fixtures.write_fixtures(assets)

server = uvicorn.Server(uvicorn.Config(create_app(assets), host="127.0.0.1",
                                       port=0, log_level="error"))
threading.Thread(target=server.run, daemon=True).start()
while not server.started:
    time.sleep(0.05)
port = server.servers[0].sockets[0].getsockname()[1]
print(f"service on 127.0.0.1:{port}")

with httpx.Client(base_url=f"http://127.0.0.1:{port}", timeout=30) as client:
    print("assets:", {k: v for k, v in client.get("/assets").json().items()
                      if k in ("volumes", "transfer_functions", "environments")})
    sid = client.post("/sessions", json={
        "volume_id": "sphere", "tf_id": "tissue", "env_id": "sun_sky",
        "width": 96, "height": 96, "seed": 0, "pass_spp": 4,
        "max_samples": 64}).json()["session_id"]

    panels = []
    with ws_connect(f"ws://127.0.0.1:{port}/sessions/{sid}/frames") as ws:
        while len(panels) < 4:
            header, payload = parse_frame_message(ws.recv(timeout=60))
            if header["count"] in (4, 16, 32, 64):
                import io
                panels.append(np.asarray(
                    Image.open(io.BytesIO(payload)).convert("RGB")))
                print(f"kept frame at {header['count']} samples/pixel")
    client.delete(f"/sessions/{sid}")

Image.fromarray(np.concatenate(panels, axis=1)).save(out_dir / "progressive.png")
print("wrote", out_dir / "progressive.png")
server.should_exit = True
