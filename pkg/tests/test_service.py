import io
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from voxtrace import pfm
from voxtrace.film import tone_map
from voxtrace.service import create_app, parse_frame_message


@pytest.fixture()
def client(asset_dir):
    app = create_app(str(asset_dir))
    with TestClient(app) as c:
        yield c
    for s in list(app.state.sessions.values()):
        s.close()


def _create(client, **over):
    body = {"volume_id": "sphere", "tf_id": "scatter_white",
            "env_id": "constant", "width": 16, "height": 12,
            "seed": 3, "pass_spp": 2, "max_samples": 64}
    body.update(over)
    r = client.post("/sessions", json=body)
    assert r.status_code == 201, r.text
    return r.json()["session_id"]


def _wait_count(client, sid, target, timeout=30.0):
    t0 = time.time()
    while time.time() - t0 < timeout:
        state = client.get(f"/sessions/{sid}").json()
        if state["count"] >= target:
            return state
        time.sleep(0.05)
    raise TimeoutError(f"session never reached count {target}")


def test_create_and_first_frame(client):
    sid = _create(client)
    with client.websocket_connect(f"/sessions/{sid}/frames") as ws:
        header, payload = parse_frame_message(ws.receive_bytes())
    assert header["count"] >= 1
    assert header["revision"] == 0
    assert header["byte_length"] == len(payload)
    assert header["width"] == 16 and header["height"] == 12


def test_unknown_asset_and_bad_dimensions(client):
    r = client.post("/sessions", json={"volume_id": "ghost",
                                       "tf_id": "scatter_white",
                                       "env_id": "constant",
                                       "width": 8, "height": 8})
    assert r.status_code == 404
    assert r.json()["error"]["code"] == "asset_not_found"
    r = client.post("/sessions", json={"volume_id": "sphere",
                                       "tf_id": "scatter_white",
                                       "env_id": "constant",
                                       "width": 0, "height": 8})
    assert r.status_code == 422
    assert r.json()["error"]["code"] == "invalid_dimensions"


def test_counts_increase_by_pass_size(client):
    sid = _create(client, pass_spp=2)
    with client.websocket_connect(f"/sessions/{sid}/frames") as ws:
        counts = [parse_frame_message(ws.receive_bytes())[0]["count"]
                  for _ in range(4)]
    assert counts == sorted(counts)
    assert all(c % 2 == 0 for c in counts)
    assert len(set(counts)) == len(counts)  # strictly increasing


def test_update_resets_accumulation_and_orders_revisions(client):
    sid = _create(client)
    with client.websocket_connect(f"/sessions/{sid}/frames") as ws:
        first, _ = parse_frame_message(ws.receive_bytes())
        assert first["revision"] == 0
        r = client.patch(f"/sessions/{sid}", json={"exposure_ev": 0.5})
        new_rev = r.json()["revision"]
        assert new_rev == 1
        seen_new = False
        last_rev = 0
        for _ in range(20):
            header, _ = parse_frame_message(ws.receive_bytes())
            assert header["revision"] >= last_rev  # never goes backwards
            last_rev = header["revision"]
            if header["revision"] == new_rev:
                seen_new = True
                assert header["count"] == 2  # accumulation restarted
                break
        assert seen_new
    state = client.get(f"/sessions/{sid}").json()
    assert state["revision"] == 1


def test_empty_patch_still_increments(client):
    sid = _create(client)
    r1 = client.patch(f"/sessions/{sid}", json={})
    r2 = client.patch(f"/sessions/{sid}", json={})
    assert r2.json()["revision"] == r1.json()["revision"] + 1


def test_malformed_patch(client):
    sid = _create(client)
    r = client.patch(f"/sessions/{sid}", json={"volume_id": "slab"})
    assert r.status_code == 422
    assert r.json()["error"]["code"] == "malformed_patch"
    r = client.patch(f"/sessions/{sid}", json={"camera": {"position": [0, 0, 0],
                                                          "target": [0, 0, 0]}})
    assert r.status_code == 422


def test_unknown_session(client):
    assert client.get("/sessions/nope").status_code == 404
    assert client.patch("/sessions/nope", json={}).status_code == 404
    assert client.get("/sessions/nope/snapshot").status_code == 404
    assert client.delete("/sessions/nope").status_code == 404


def test_vacuum_snapshot_is_exact_ones(client):
    sid = _create(client, volume_id="slab", tf_id="vacuum", env_id="constant",
                  width=6, height=4, max_samples=4)
    _wait_count(client, sid, 4)
    data = client.get(f"/sessions/{sid}/snapshot?fmt=pfm").content
    img = pfm.read_pfm(io.BytesIO(data))
    assert np.all(img == 1.0)


def test_snapshot_stable_and_png_matches_tonemap(client):
    sid = _create(client, max_samples=8)
    _wait_count(client, sid, 8)  # loop idles at the cap
    a = client.get(f"/sessions/{sid}/snapshot?fmt=pfm").content
    b = client.get(f"/sessions/{sid}/snapshot?fmt=pfm").content
    assert a == b
    png = client.get(f"/sessions/{sid}/snapshot?fmt=png8").content
    decoded = np.asarray(Image.open(io.BytesIO(png)).convert("RGB"))
    linear = pfm.read_pfm(io.BytesIO(a)).astype(np.float64)
    assert np.array_equal(decoded, tone_map(linear, 0.0))


def test_sessions_are_isolated(client):
    a = _create(client, seed=1, max_samples=8)
    b = _create(client, seed=1, max_samples=8)
    _wait_count(client, a, 8)
    _wait_count(client, b, 8)
    snap_a1 = client.get(f"/sessions/{a}/snapshot?fmt=pfm").content
    snap_b1 = client.get(f"/sessions/{b}/snapshot?fmt=pfm").content
    assert snap_a1 == snap_b1  # identical params and seed, identical buffers
    client.patch(f"/sessions/{a}", json={"exposure_ev": 2.0})
    time.sleep(0.3)
    snap_b2 = client.get(f"/sessions/{b}/snapshot?fmt=pfm").content
    assert snap_b1 == snap_b2  # editing one session never touches another


def test_deterministic_across_service_restarts(asset_dir):
    snaps = []
    for _ in range(2):
        app = create_app(str(asset_dir))
        with TestClient(app) as c:
            sid = _create(c, seed=11, pass_spp=2, max_samples=6)
            _wait_count(c, sid, 6)
            snaps.append(c.get(f"/sessions/{sid}/snapshot?fmt=pfm").content)
        for s in list(app.state.sessions.values()):
            s.close()
    assert snaps[0] == snaps[1]


def test_delete_emits_close_message(client):
    sid = _create(client)
    with client.websocket_connect(f"/sessions/{sid}/frames") as ws:
        parse_frame_message(ws.receive_bytes())
        client.delete(f"/sessions/{sid}")
        closed = False
        for _ in range(10):
            header, _ = parse_frame_message(ws.receive_bytes())
            if header["encoding"] == "close":
                closed = True
                break
        assert closed


def test_raycast_session_completes_in_one_pass(client):
    sid = _create(client, integrator="raycast", tf_id="emissive",
                  volume_id="slab", env_id="black", max_samples=64)
    state = _wait_count(client, sid, 1)
    assert state["count"] == 1
    time.sleep(0.2)
    assert client.get(f"/sessions/{sid}").json()["count"] == 1
