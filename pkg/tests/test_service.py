import hashlib
import json

import numpy as np
import pytest

from voxlens import formats
from voxlens.bench import benchmark_scene
from voxlens.edit import EditCommand, apply_edit
from voxlens.field import rebuild_bitfield
from voxlens.lens import LensConfig
from voxlens.raster import Mesh
from voxlens.service import (MAX_INFLIGHT, SessionState, create_app,
                             handle_message, parse_frame_packet,
                             render_session_frame)


def make_state(n=24, ppd=1.0, fov=30.0):
    grid = benchmark_scene(n)
    bits, _ = rebuild_bitfield(grid)
    state = SessionState(grid=grid, bits=bits)
    state.lens = LensConfig(fov_deg=fov, ppd=ppd, plane_w=4.0, far_len=6.0)
    return state


def test_pose_message_ack():
    state = make_state()
    reply, dirty = handle_message(state, {"type": "pose", "seq": 1,
                                          "pos": [0, 0, 0],
                                          "quat": [0, 0, 0, 1]})
    assert reply == {"type": "ack", "seq": 1}
    assert dirty
    assert np.allclose(state.cam.position, (0, 0, 0))


def test_lens_out_of_range_err():
    state = make_state()
    reply, dirty = handle_message(state, {"type": "lens", "seq": 2,
                                          "fov_deg": 200})
    assert reply["type"] == "err" and reply["seq"] == 2
    assert "fov_deg" in reply["reason"]
    assert not dirty


def test_unknown_type_err():
    reply, _ = handle_message(make_state(), {"type": "warp", "seq": 3})
    assert reply == {"type": "err", "seq": 3, "reason": "unknown_type"}


def test_malformed_message_err():
    reply, _ = handle_message(make_state(), {"type": "pose", "seq": 4})
    assert reply["type"] == "err"


def test_edit_message_matches_direct_apply():
    state = make_state()
    msg = {"type": "edit", "seq": 5, "mode": "erase",
           "center": [1.0, 1.0, 1.2], "radius": 0.3}
    reply, dirty = handle_message(state, msg)
    assert reply["type"] == "ack" and dirty
    packet, stats = render_session_frame(state)

    grid2 = benchmark_scene(24)
    bits2, _ = rebuild_bitfield(grid2)
    expected = apply_edit(grid2, bits2,
                          EditCommand(mode="erase", center=(1.0, 1.0, 1.2),
                                      radius=0.3))
    assert state.bits.content_hash() == expected.content_hash()


def test_frame_determinism_and_ids():
    state = make_state()
    p1, s1 = render_session_frame(state)
    p2, s2 = render_session_frame(state)
    assert s1["frame_id"] == 1 and s2["frame_id"] == 2
    h1, payload1 = parse_frame_packet(p1)
    h2, payload2 = parse_frame_packet(p2)
    assert h1["frame_id"] == 1 and h2["frame_id"] == 2
    assert hashlib.sha256(payload1).hexdigest() == \
        hashlib.sha256(payload2).hexdigest()


def test_frame_ids_strictly_increase():
    state = make_state(n=16, ppd=0.5)
    ids = []
    for _ in range(100):
        _, stats = render_session_frame(state)
        ids.append(stats["frame_id"])
    assert ids == list(range(1, 101))


def test_fov_change_reduces_samples():
    state = make_state(n=32, ppd=1.0, fov=30.0)
    _, s30 = render_session_frame(state)
    reply, _ = handle_message(state, {"type": "lens", "seq": 7, "fov_deg": 10})
    assert reply["type"] == "ack"
    _, s10 = render_session_frame(state)
    assert s10["samples_total"] < s30["samples_total"]


def test_erase_reduces_samples_next_frame():
    state = make_state(n=32, ppd=1.0)
    _, before = render_session_frame(state)
    handle_message(state, {"type": "edit", "seq": 8, "mode": "erase",
                           "center": [1.0, 1.0, 1.2], "radius": 0.25})
    _, after = render_session_frame(state)
    assert after["samples_total"] < before["samples_total"]


def test_mode_needs_mesh():
    state = make_state(n=16, ppd=0.5)
    handle_message(state, {"type": "tunnel", "seq": 9, "mode": "occlude"})
    with pytest.raises(RuntimeError, match="mesh"):
        render_session_frame(state)


def test_modes_render_with_mesh():
    state = make_state(n=16, ppd=0.5)
    v = np.array([[-4, -4, 1.5], [4, -4, 1.5], [4, 4, 1.5], [-4, 4, 1.5]])
    v[:, 0] += 1.0
    v[:, 1] += 1.0
    state.mesh = Mesh(v, np.array([[0, 1, 2], [0, 2, 3]]),
                      np.array([[0.2, 0.6, 0.9]] * 2))
    for mode in ("tunnel", "merge", "occlude", "volume"):
        handle_message(state, {"type": "tunnel", "seq": 10, "mode": mode})
        packet, stats = render_session_frame(state)
        hdr, payload = parse_frame_packet(packet)
        assert hdr["format"] == 0 and len(payload) > 0
        assert stats["mode"] == mode


def test_probe_returns_depth():
    state = make_state(n=16, ppd=0.5)
    reply, _ = handle_message(state, {"type": "probe", "seq": 11})
    assert reply["type"] == "err"  # nothing rendered yet
    render_session_frame(state)
    reply, _ = handle_message(state, {"type": "probe", "seq": 12})
    assert reply["type"] == "probe_result"
    assert reply["depth"] > 0


def test_save_and_load_mask_messages(tmp_path):
    state = make_state(n=16, ppd=0.5)
    path = str(tmp_path / "m.mnlb")
    reply, _ = handle_message(state, {"type": "save_mask", "seq": 13,
                                      "path": path})
    assert reply["type"] == "ack"
    reply, dirty = handle_message(state, {"type": "load_mask", "seq": 14,
                                          "path": path})
    assert reply["type"] == "ack" and dirty


def test_get_state_snapshot():
    state = make_state()
    reply, dirty = handle_message(state, {"type": "get_state", "seq": 15})
    assert reply["type"] == "state" and reply["seq"] == 15
    assert reply["fov_deg"] == 30.0 and reply["scene_loaded"]
    assert not dirty


def test_frame_header_layout():
    state = make_state(n=16, ppd=0.5)
    packet, _ = render_session_frame(state)
    assert packet[:4] == b"MNLF"
    hdr, payload = parse_frame_packet(packet)
    res = hdr["width"]
    assert hdr["height"] == res
    assert payload[:8] == b"\x89PNG\r\n\x1a\n"


class WsReader:
    """Classifies websocket traffic into frames and typed JSON messages."""

    def __init__(self, ws):
        self.ws = ws
        self.frames = []
        self.texts = []

    def pump_until(self, pred, limit=50):
        for _ in range(limit):
            for t in self.texts:
                if pred(t):
                    self.texts.remove(t)
                    return t
            raw = self.ws.receive()
            if "bytes" in raw and raw["bytes"] is not None:
                self.frames.append(raw["bytes"])
            else:
                self.texts.append(json.loads(raw["text"]))
        raise AssertionError("expected message not received")


def test_websocket_flow_and_backpressure():
    from fastapi.testclient import TestClient

    state = make_state(n=16, ppd=0.5)
    app = create_app(state)
    client = TestClient(app)
    with client.websocket_connect("/stream") as ws:
        rd = WsReader(ws)
        rd.pump_until(lambda m: m.get("type") == "state")
        first_stats = rd.pump_until(lambda m: m.get("type") == "stats")
        assert first_stats["frame_id"] == 1

        # rapid state changes without acks: frames in flight stay capped
        for i in range(6):
            ws.send_text(json.dumps({"type": "lens", "seq": 20 + i,
                                     "fov_deg": 20 + i}))
        for i in range(6):
            rd.pump_until(lambda m, s=20 + i: m.get("type") == "ack"
                          and m.get("seq") == s)
        stats_seen = [t for t in rd.texts if t.get("type") == "stats"]
        assert len(rd.frames) + 0 <= MAX_INFLIGHT
        assert len(stats_seen) <= MAX_INFLIGHT - 1  # first frame still unacked

        # acking frees a slot; the newest state renders next (latest wins)
        ws.send_text(json.dumps({"type": "frame_ack", "frame_id": 1,
                                 "seq": 40}))
        rd.pump_until(lambda m: m.get("type") == "ack" and m.get("seq") == 40)
        stats3 = rd.pump_until(lambda m: m.get("type") == "stats"
                               and m["frame_id"] == 3)
        assert stats3["frame_id"] == 3

        ws.send_text(json.dumps({"type": "get_state", "seq": 41}))
        reply = rd.pump_until(lambda m: m.get("type") == "state"
                              and m.get("seq") == 41)
        assert reply["fov_deg"] == 25
        # every received frame parses
        for f in rd.frames:
            hdr, payload = parse_frame_packet(f)
            assert hdr["frame_id"] >= 1


def test_healthz():
    from fastapi.testclient import TestClient

    client = TestClient(create_app(make_state(n=16, ppd=0.5)))
    r = client.get("/healthz")
    assert r.status_code == 200
    assert r.json()["scene_loaded"]
