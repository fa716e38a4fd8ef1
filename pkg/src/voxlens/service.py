"""Frame-streaming render server: JSON control messages in, binary frame
packets plus stats out, over a single websocket at /stream.

Frame packet layout (little-endian): magic MNLF, u16 width, u16 height,
u8 format (0 = RGBA8 PNG payload), u8 flags, u32 frame_id, u32 payload
length, then the payload. Every control message carries a client `seq`
and is answered with an ack (or a typed reply) or an err naming the
offending field. At most two frames are unacknowledged in flight; extra
state changes just mark the session dirty and the newest state wins.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from . import formats
from .edit import EditCommand, apply_edit, load_mask, save_mask
from .field import DEFAULT_TAU, rebuild_bitfield
from .framebuffer import DepthMap
from .fusion import (FusionTransform, OcclusionScene, TunnelConfig,
                     composite_merge, composite_tunnel, depth_occlude)
from .lens import Camera, LensConfig, lens_resolution
from .raster import Mesh, load_obj, rasterize
from .raymarch import MarchConfig, render_frame
from .xform import Trs

FRAME_HEADER = struct.Struct("<4sHHBBII")
FORMAT_RGBA8_PNG = 0
MAX_INFLIGHT = 2
MODES = ("volume", "tunnel", "merge", "occlude")


@dataclass
class SessionState:
    """Everything one render session needs; mutated only between frames."""

    grid: object = None
    bits: object = None
    mesh: Mesh | None = None
    cam: Camera = dc_field(default_factory=lambda: Camera(
        position=(1.0, 1.0, 0.15), near=0.05, far=10.0))
    lens: LensConfig = dc_field(default_factory=lambda: LensConfig(
        fov_deg=30.0, ppd=4.0, plane_w=4.0, far_len=6.0))
    march: MarchConfig = dc_field(default_factory=MarchConfig)
    tunnel: TunnelConfig = dc_field(default_factory=TunnelConfig)
    mode: str = "volume"
    peripheral_fov: float = 60.0
    alignment: FusionTransform = dc_field(default_factory=FusionTransform)
    tau: float = DEFAULT_TAU
    style: str = "wireframe"
    threads: int | None = None
    frame_id: int = 0
    pending_edits: list = dc_field(default_factory=list)
    last_depth: DepthMap | None = None
    last_stats: dict = dc_field(default_factory=dict)

    def snapshot(self) -> dict:
        return {
            "pos": [float(x) for x in self.cam.position],
            "quat": [float(x) for x in self.cam.orientation],
            "near": self.cam.near, "far": self.cam.far,
            "fov_deg": self.lens.fov_deg, "ppd": self.lens.ppd,
            "plane_w": self.lens.plane_w, "far_len": self.lens.far_len,
            "supersample_c": self.lens.supersample_c,
            "mode": self.mode, "peripheral_fov": self.peripheral_fov,
            "feather_deg": self.tunnel.feather_deg,
            "merge_alpha": self.tunnel.merge_alpha,
            "alignment": self.alignment.to_dict(),
            "frame_id": self.frame_id,
            "resolution": lens_resolution(self.lens.fov_deg, self.lens.ppd),
            "scene_loaded": self.grid is not None,
            "mesh_loaded": self.mesh is not None,
        }


def _err(seq, reason):
    return {"type": "err", "seq": seq, "reason": reason}


def _ack(seq):
    return {"type": "ack", "seq": seq}


def handle_message(state: SessionState, msg: dict):
    """Apply one control message; returns (reply dict, frame_dirty bool).

    Pure state transition: no rendering happens here, so the server loop
    (or a test) decides when frames get produced.
    """
    if not isinstance(msg, dict) or "type" not in msg:
        return _err(msg.get("seq") if isinstance(msg, dict) else None,
                    "message must be an object with a 'type'"), False
    seq = msg.get("seq")
    kind = msg["type"]
    try:
        if kind == "pose":
            cam = Camera(position=msg["pos"], orientation=msg["quat"],
                         near=float(msg.get("near", state.cam.near)),
                         far=float(msg.get("far", state.cam.far)))
            state.cam = cam
            return _ack(seq), True
        if kind == "lens":
            try:
                lens = LensConfig(
                    fov_deg=float(msg.get("fov_deg", state.lens.fov_deg)),
                    ppd=float(msg.get("ppd", state.lens.ppd)),
                    plane_w=float(msg.get("plane_w", state.lens.plane_w)),
                    far_len=float(msg.get("far_len", state.lens.far_len)),
                    supersample_c=float(msg.get("supersample_c",
                                                state.lens.supersample_c)))
                lens.validate_against(state.cam)
            except ValueError as exc:
                return _err(seq, f"lens.{exc}"), False
            state.lens = lens
            return _ack(seq), True
        if kind == "tunnel":
            try:
                cfg = TunnelConfig(
                    feather_deg=float(msg.get("feather_deg",
                                              state.tunnel.feather_deg)),
                    merge_alpha=float(msg.get("merge_alpha",
                                              state.tunnel.merge_alpha)))
            except ValueError as exc:
                return _err(seq, f"tunnel.{exc}"), False
            mode = msg.get("mode", state.mode)
            if mode not in MODES:
                return _err(seq, f"tunnel.mode must be one of {MODES}"), False
            if msg.get("peripheral_fov") is not None:
                pf = float(msg["peripheral_fov"])
                if not 0 < pf <= 120:
                    return _err(seq, "tunnel.peripheral_fov out of range (0, 120]"), False
                state.peripheral_fov = pf
            state.tunnel = cfg
            state.mode = mode
            return _ack(seq), True
        if kind == "align":
            trs = Trs(np.asarray(msg["translation"], float),
                      np.asarray(msg["rotation_quat"], float),
                      float(msg["scale"]))
            state.alignment = FusionTransform(trs)
            return _ack(seq), True
        if kind == "edit":
            cmd = EditCommand(mode=msg["mode"], center=msg["center"],
                              radius=float(msg["radius"]),
                              hard=bool(msg.get("hard", False)),
                              t_ms=float(msg.get("t_ms", 0.0)))
            state.pending_edits.append(cmd)
            return _ack(seq), True
        if kind == "save_mask":
            if state.bits is None:
                return _err(seq, "no scene loaded"), False
            save_mask(state.bits, msg["path"])
            return _ack(seq), False
        if kind == "load_mask":
            if state.grid is None:
                return _err(seq, "no scene loaded"), False
            state.bits = load_mask(msg["path"], state.grid, state.tau)
            return _ack(seq), True
        if kind == "get_state":
            reply = {"type": "state", "seq": seq}
            reply.update(state.snapshot())
            return reply, False
        if kind == "probe":
            if state.last_depth is None:
                return _err(seq, "no depth rendered yet"), False
            px = int(msg.get("px", state.last_depth.values.shape[1] // 2))
            py = int(msg.get("py", state.last_depth.values.shape[0] // 2))
            h, w = state.last_depth.values.shape
            if not (0 <= px < w and 0 <= py < h):
                return _err(seq, "probe.px/py out of bounds"), False
            return {"type": "probe_result", "seq": seq,
                    "depth": float(state.last_depth.values[py, px]),
                    "sentinel": state.last_depth.sentinel}, False
        if kind == "render":
            return _ack(seq), True
        if kind == "frame_ack":
            return _ack(seq), False
        return _err(seq, "unknown_type"), False
    except (KeyError, TypeError) as exc:
        return _err(seq, f"{kind}: missing or malformed field {exc}"), False
    except (ValueError, formats.FormatError, OSError) as exc:
        return _err(seq, f"{kind}: {exc}"), False


def render_session_frame(state: SessionState):
    """Render per current state; returns (packet bytes, stats dict).

    Pending edits are drained first (frame-boundary mutation), then the
    frame id increments, so effects land in frame order.
    """
    if state.grid is None or state.bits is None:
        raise RuntimeError("no scene loaded")
    while state.pending_edits:
        cmd = state.pending_edits.pop(0)
        state.bits = apply_edit(state.grid, state.bits, cmd, state.tau)

    align_trs = state.alignment.trs
    vol = render_frame(state.grid, state.bits, state.cam, state.lens,
                       cfg=state.march, alignment=align_trs,
                       threads=state.threads)
    frame = vol.frame
    state.last_depth = vol.depth

    if state.mode != "volume":
        if state.mesh is None:
            raise RuntimeError(f"mode {state.mode!r} needs a mesh loaded")
        if state.mode == "tunnel":
            cast = lens_resolution(state.peripheral_fov, state.lens.ppd)
            out_res = -(-cast // state.lens.ss_axis)
            ras = rasterize(state.mesh, state.cam, state.peripheral_fov,
                            max(out_res, 1), style=state.style)
            frame = composite_tunnel(frame, ras, state.tunnel,
                                     state.lens.fov_deg, state.peripheral_fov)
        else:
            res = vol.frame.shape[0]
            ras = rasterize(state.mesh, state.cam, state.lens.fov_deg,
                            max(res, 1), style=state.style)
            if state.mode == "merge":
                frame = composite_merge(frame, ras, state.tunnel.merge_alpha)
            else:
                scene = OcclusionScene(state.grid, state.bits, state.cam,
                                       state.lens, state.march,
                                       alignment=align_trs,
                                       threads=state.threads)
                frame = depth_occlude(frame, vol.depth, ras, scene=scene)

    state.frame_id += 1
    payload = formats.png_bytes(frame)
    h, w = frame.shape
    header = FRAME_HEADER.pack(formats.FRAME_MAGIC, w, h, FORMAT_RGBA8_PNG, 0,
                               state.frame_id, len(payload))
    stats = {"type": "stats", "frame_id": state.frame_id,
             "resolution": frame.shape[0], "mode": state.mode}
    stats.update(vol.stats.as_dict())
    state.last_stats = stats
    return header + payload, stats


def parse_frame_packet(data: bytes):
    """Split a binary frame packet into (header fields dict, payload)."""
    if len(data) < FRAME_HEADER.size:
        raise ValueError("frame packet shorter than header")
    magic, w, h, fmt, flags, frame_id, plen = FRAME_HEADER.unpack_from(data)
    if magic != formats.FRAME_MAGIC:
        raise ValueError(f"bad frame magic {magic!r}")
    payload = data[FRAME_HEADER.size:]
    if len(payload) != plen:
        raise ValueError(f"payload length {len(payload)} != header {plen}")
    return {"width": w, "height": h, "format": fmt, "flags": flags,
            "frame_id": frame_id}, payload


def load_session(scene=None, mesh=None, mask=None, **kwargs) -> SessionState:
    state = SessionState(**kwargs)
    if scene:
        state.grid = formats.read_grid(scene)
        state.bits, _ = rebuild_bitfield(state.grid, state.tau)
        if mask:
            state.bits = load_mask(mask, state.grid, state.tau)
    if mesh:
        state.mesh = load_obj(mesh)
    return state


def create_app(state: SessionState, static_dir=None):
    """FastAPI app exposing the /stream websocket (and the viewer assets)."""
    import json as _json

    app = FastAPI()
    app.state.session = state

    @app.get("/healthz")
    def healthz():
        return {"ok": True, "scene_loaded": state.grid is not None}

    @app.websocket("/stream")
    async def stream(ws: WebSocket):
        await ws.accept()
        hello = {"type": "state", "seq": None}
        hello.update(state.snapshot())
        await ws.send_text(_json.dumps(hello))
        inflight = 0
        dirty = state.grid is not None

        async def pump():
            nonlocal inflight, dirty
            while dirty and inflight < MAX_INFLIGHT:
                dirty = False
                try:
                    packet, stats = render_session_frame(state)
                except RuntimeError as exc:
                    await ws.send_text(_json.dumps(
                        {"type": "err", "seq": None, "reason": str(exc)}))
                    return
                await ws.send_bytes(packet)
                await ws.send_text(_json.dumps(stats))
                inflight += 1

        await pump()
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = _json.loads(raw)
                except _json.JSONDecodeError as exc:
                    await ws.send_text(_json.dumps(
                        {"type": "err", "seq": None,
                         "reason": f"bad json: {exc}"}))
                    continue
                reply, wants_frame = handle_message(state, msg)
                if isinstance(msg, dict) and msg.get("type") == "frame_ack":
                    inflight = max(0, inflight - 1)
                await ws.send_text(_json.dumps(reply))
                if wants_frame:
                    dirty = True
                await pump()
        except WebSocketDisconnect:
            return

    if static_dir and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="viewer")
    return app


def default_static_dir():
    cand = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return cand if cand.is_dir() else None


def serve(state: SessionState, host="127.0.0.1", port=7878, static_dir=None):
    import uvicorn

    app = create_app(state, static_dir=static_dir or default_static_dir())
    uvicorn.run(app, host=host, port=port, log_level="warning")
