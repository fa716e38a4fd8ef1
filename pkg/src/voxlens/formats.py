"""Serialization for every on-disk artifact: voxel grids (MNLV), occupancy
masks (MNLB), trajectories, fusion transforms, edit logs, benchmark CSV,
and frame exports. All binary layouts are little-endian regardless of host;
writers go through a temp-file rename so readers never see partial files.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

GRID_MAGIC = b"MNLV"
MASK_MAGIC = b"MNLB"
FRAME_MAGIC = b"MNLF"
VERSION = 1

CSV_HEADER = ("fov_deg,ppd,resolution,masked,mean_ft_ms,p95_ft_ms,"
              "mean_samples,mean_active_rays")


class FormatError(Exception):
    pass


class BadMagic(FormatError):
    pass


class VersionUnsupported(FormatError):
    pass


class ShapeMismatch(FormatError):
    pass


class CorruptPayload(FormatError):
    pass


def _atomic_write(path, data: bytes):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."),
                               prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_text(path, text: str):
    _atomic_write(path, text.encode("utf-8"))


# --- voxel grid (MNLV) -------------------------------------------------------

def write_grid(path, grid):
    """magic MNLV, u32 version, u32 h,w,l, f32 origin[3], f32 voxel_size,
    then h*w*l interleaved f32 (r, g, b, sigma) records."""
    h, w, l = grid.dims
    header = GRID_MAGIC + struct.pack("<IIII", VERSION, h, w, l)
    header += struct.pack("<ffff", *(float(x) for x in grid.origin),
                          float(grid.voxel_size))
    records = np.empty((h * w * l, 4), dtype="<f4")
    records[:, :3] = grid.color.reshape(-1, 3)
    records[:, 3] = grid.sigma.reshape(-1)
    _atomic_write(path, header + records.tobytes())


def read_grid(path):
    from .field import RadianceFieldGrid

    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != GRID_MAGIC:
        raise BadMagic(f"{path}: expected magic {GRID_MAGIC!r}")
    if len(raw) < 36:
        raise CorruptPayload(f"{path}: header truncated")
    version, h, w, l = struct.unpack_from("<IIII", raw, 4)
    if version != VERSION:
        raise VersionUnsupported(f"{path}: grid version {version} unsupported")
    if min(h, w, l) < 1:
        raise CorruptPayload(f"{path}: bad dims ({h}, {w}, {l})")
    ox, oy, oz, vs = struct.unpack_from("<ffff", raw, 20)
    if not vs > 0:
        raise CorruptPayload(f"{path}: voxel_size {vs} must be > 0")
    n = h * w * l
    expected = 36 + n * 16
    if len(raw) != expected:
        raise CorruptPayload(
            f"{path}: payload is {len(raw)} bytes, expected {expected}")
    records = np.frombuffer(raw, dtype="<f4", count=n * 4, offset=36)
    records = records.reshape(n, 4)
    color = records[:, :3].reshape(h, w, l, 3)
    sigma = records[:, 3].reshape(h, w, l)
    return RadianceFieldGrid((h, w, l), (ox, oy, oz), vs, sigma, color)


# --- occupancy mask (MNLB) ---------------------------------------------------

def write_mask(path, bits):
    h, w, l = bits.dims
    header = MASK_MAGIC + struct.pack("<IIII", VERSION, h, w, l)
    _atomic_write(path, header + bits.bits.tobytes())


def read_mask(path):
    from .field import OccupancyBitfield

    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != MASK_MAGIC:
        raise BadMagic(f"{path}: expected magic {MASK_MAGIC!r}")
    if len(raw) < 20:
        raise CorruptPayload(f"{path}: header truncated")
    version, h, w, l = struct.unpack_from("<IIII", raw, 4)
    if version != VERSION:
        raise VersionUnsupported(f"{path}: mask version {version} unsupported")
    if min(h, w, l) < 1:
        raise CorruptPayload(f"{path}: bad dims ({h}, {w}, {l})")
    nbytes = (h * w * l + 7) // 8
    if len(raw) != 20 + nbytes:
        raise CorruptPayload(
            f"{path}: payload is {len(raw)} bytes, expected {20 + nbytes}")
    bits = np.frombuffer(raw, dtype=np.uint8, count=nbytes, offset=20).copy()
    return OccupancyBitfield((h, w, l), bits)


# --- JSON artifacts ----------------------------------------------------------

def write_trajectory(path, traj):
    payload = {"samples": [{"t_ms": float(s.t_ms),
                            "position": [float(x) for x in s.position],
                            "quaternion": [float(x) for x in s.quaternion]}
                           for s in traj.samples]}
    _atomic_write_text(path, json.dumps(payload, indent=1))


def read_trajectory(path):
    from .bench import Trajectory, TrajectorySample

    try:
        data = json.loads(Path(path).read_text())
        samples = [TrajectorySample(s["t_ms"], s["position"], s["quaternion"])
                   for s in data["samples"]]
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise CorruptPayload(f"{path}: not a trajectory file: {exc}") from None
    return Trajectory(samples)


def write_fusion_transform(path, transform):
    _atomic_write_text(path, json.dumps(transform.to_dict(), indent=1))


def read_fusion_transform(path):
    from .fusion import FusionTransform

    try:
        return FusionTransform.from_dict(json.loads(Path(path).read_text()))
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise CorruptPayload(f"{path}: not a fusion transform: {exc}") from None


def write_edit_log(path, log):
    lines = [json.dumps(cmd.to_dict()) for cmd in log.commands]
    _atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def read_edit_log(path):
    from .edit import EditCommand, EditLog

    commands = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            commands.append(EditCommand.from_dict(json.loads(line)))
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise CorruptPayload(f"{path}:{lineno}: bad edit record: {exc}") from None
    return EditLog(commands)


def write_pose(path, cam):
    payload = {"position": [float(x) for x in cam.position],
               "quaternion": [float(x) for x in cam.orientation],
               "near": cam.near, "far": cam.far}
    _atomic_write_text(path, json.dumps(payload, indent=1))


def read_pose(path, near=None, far=None):
    from .lens import Camera

    try:
        data = json.loads(Path(path).read_text())
        return Camera(position=data["position"],
                      orientation=data.get("quaternion", (0, 0, 0, 1)),
                      near=near if near is not None else data.get("near", 0.05),
                      far=far if far is not None else data.get("far", 100.0))
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise CorruptPayload(f"{path}: not a pose file: {exc}") from None


def write_scene_spec(path, spec):
    prims = []
    for p in spec.primitives:
        d = {"kind": p.kind, "color": [float(c) for c in p.color],
             "density": p.density}
        if p.kind == "sphere":
            d["center"] = [float(c) for c in p.center]
            d["radius"] = p.radius
        elif p.kind == "box":
            d["min"] = [float(c) for c in p.min_corner]
            d["max"] = [float(c) for c in p.max_corner]
        else:
            d["axis"] = p.axis
            d["range"] = [p.lo, p.hi]
        prims.append(d)
    payload = {"dims": list(spec.dims), "origin": [float(c) for c in spec.origin],
               "voxel_size": spec.voxel_size, "primitives": prims}
    _atomic_write_text(path, json.dumps(payload, indent=1))


def read_scene_spec(path):
    from .field import ScenePrimitive, SceneSpec

    try:
        data = json.loads(Path(path).read_text())
        prims = []
        for d in data.get("primitives", []):
            kind = d["kind"]
            common = dict(kind=kind, color=d["color"], density=d["density"])
            if kind == "sphere":
                prims.append(ScenePrimitive(center=d["center"], radius=d["radius"],
                                            **common))
            elif kind == "box":
                prims.append(ScenePrimitive(min_corner=d["min"],
                                            max_corner=d["max"], **common))
            else:
                prims.append(ScenePrimitive(axis=int(d.get("axis", 2)),
                                            lo=d["range"][0], hi=d["range"][1],
                                            **common))
        return SceneSpec(dims=data["dims"], origin=data.get("origin", (0, 0, 0)),
                         voxel_size=data.get("voxel_size", 1.0), primitives=prims)
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise CorruptPayload(f"{path}: not a scene spec: {exc}") from None


# --- benchmark CSV -----------------------------------------------------------

def write_bench_csv(path, rows):
    """Rows are bench.SweepRow; column set and order are part of the contract."""
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(f"{r.fov_deg:g},{r.ppd:g},{r.resolution},{int(r.masked)},"
                     f"{r.mean_ft_ms:.6f},{r.p95_ft_ms:.6f},"
                     f"{r.mean_samples:.6f},{r.mean_active_rays:.6f}")
    _atomic_write_text(path, "\n".join(lines) + "\n")


# --- frame exports -----------------------------------------------------------

def write_png(path, frame):
    from PIL import Image

    img = Image.fromarray(frame.to_rgba8(), mode="RGBA")
    import io

    buf = io.BytesIO()
    img.save(buf, format="PNG")
    _atomic_write(path, buf.getvalue())


def png_bytes(frame) -> bytes:
    import io

    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(frame.to_rgba8(), mode="RGBA").save(buf, format="PNG")
    return buf.getvalue()


def write_frame_f32(path, frame):
    _atomic_write(path, frame.rgba.astype("<f4").tobytes())


def write_depth_f32(path, depth_map):
    """Raw little-endian f32 depth plus a JSON sidecar with the range."""
    path = Path(path)
    _atomic_write(path, depth_map.values.astype("<f4").tobytes())
    sidecar = {"near": depth_map.near, "far": depth_map.far,
               "sentinel": depth_map.sentinel,
               "shape": list(depth_map.values.shape)}
    _atomic_write_text(path.with_suffix(path.suffix + ".json"),
                       json.dumps(sidecar, indent=1))


# --- dispatch ----------------------------------------------------------------

def read_any(path):
    """Load a typed artifact, dispatching on magic bytes first, extension second."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == GRID_MAGIC:
        return read_grid(path)
    if head == MASK_MAGIC:
        return read_mask(path)
    suffix = path.suffix.lower()
    if suffix == ".jsonl":
        return read_edit_log(path)
    if suffix == ".json":
        data = json.loads(path.read_text())
        if "samples" in data:
            return read_trajectory(path)
        if "matrix" in data or "rotation_quat" in data:
            return read_fusion_transform(path)
        if "primitives" in data or "dims" in data:
            return read_scene_spec(path)
        if "position" in data:
            return read_pose(path)
        raise CorruptPayload(f"{path}: unrecognized JSON artifact")
    raise BadMagic(f"{path}: unknown magic {head!r} and extension {suffix!r}")
