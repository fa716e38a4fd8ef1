"""Minimal software rasterizer for CAD context: solid flat-shaded triangles
or feature-edge wireframe, with a z-buffer storing ray distance so volume
and raster depths compare directly."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .framebuffer import DepthMap
from .lens import Camera, focal_px

DEFAULT_FACE_COLOR = (0.7, 0.7, 0.7)
FEATURE_EDGE_DEG = 15.0


class ObjParseError(ValueError):
    pass


@dataclass
class Mesh:
    vertices: np.ndarray      # (n, 3) world points
    triangles: np.ndarray     # (m, 3) vertex indices
    face_colors: np.ndarray   # (m, 3) rgb per triangle

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size and (self.triangles.min() < 0
                                    or self.triangles.max() >= len(self.vertices)):
            raise ValueError("triangle index out of range")
        self.face_colors = np.asarray(self.face_colors, dtype=np.float64).reshape(-1, 3)
        if len(self.face_colors) != len(self.triangles):
            raise ValueError("face_colors length must match triangles")

    @property
    def empty(self) -> bool:
        return len(self.triangles) == 0

    def face_normals(self) -> np.ndarray:
        v = self.vertices
        t = self.triangles
        n = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        lens = np.linalg.norm(n, axis=1, keepdims=True)
        lens[lens < 1e-30] = 1.0
        return n / lens

    def feature_edges(self, angle_deg: float = FEATURE_EDGE_DEG) -> np.ndarray:
        """Edges on <2 faces or with a dihedral above angle_deg, as (k,2) indices.

        Degenerate faces (area below 1e-12) are left out of the adjacency so
        they cannot suppress a real silhouette edge.
        """
        v, t = self.vertices, self.triangles
        areas = 0.5 * np.linalg.norm(
            np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]]), axis=1)
        normals = self.face_normals()
        edge_faces: dict = {}
        for fi in range(len(t)):
            if areas[fi] <= 1e-12:
                continue
            a, b, c = t[fi]
            for e in ((a, b), (b, c), (c, a)):
                key = (min(e), max(e))
                edge_faces.setdefault(key, []).append(fi)
        cos_thresh = math.cos(math.radians(angle_deg))
        out = []
        for (a, b), faces in edge_faces.items():
            if len(faces) != 2:
                out.append((a, b))
                continue
            d = float(np.dot(normals[faces[0]], normals[faces[1]]))
            if d < cos_thresh:
                out.append((a, b))
        return np.asarray(sorted(out), dtype=np.int64).reshape(-1, 2)


@dataclass
class RasterOutput:
    """RGBA color (alpha 1 where covered) + per-pixel ray-distance depth."""

    color: np.ndarray
    depth: np.ndarray
    near: float
    far: float
    pose: tuple | None = None

    def __post_init__(self):
        self.color = np.ascontiguousarray(self.color, dtype=np.float32)
        self.depth = np.ascontiguousarray(self.depth, dtype=np.float32)

    @property
    def sentinel(self) -> float:
        return self.far

    def depth_map(self) -> DepthMap:
        return DepthMap(self.depth, self.near, self.far)


def load_obj(path, colors=None) -> Mesh:
    """Parse a Wavefront OBJ (v/f, polygon fan triangulation).

    Per-object colors come from `colors` (dict name->rgb, or a JSON path);
    when absent, `<file>.colors.json` next to the OBJ is used if present.
    Unknown directives are ignored. Malformed or out-of-range indices raise
    ObjParseError naming the line number.
    """
    path = Path(path)
    if colors is None:
        sidecar = path.with_suffix(path.suffix + ".colors.json")
        if sidecar.exists():
            colors = json.loads(sidecar.read_text())
    elif isinstance(colors, (str, Path)):
        colors = json.loads(Path(colors).read_text())
    colors = colors or {}

    vertices: list = []
    triangles: list = []
    face_colors: list = []
    current = DEFAULT_FACE_COLOR
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ObjParseError(f"{path}:{lineno}: vertex needs 3 coords")
                try:
                    vertices.append([float(x) for x in parts[1:4]])
                except ValueError as exc:
                    raise ObjParseError(f"{path}:{lineno}: bad vertex: {exc}") from None
            elif tag == "o":
                name = parts[1] if len(parts) > 1 else ""
                current = tuple(colors.get(name, DEFAULT_FACE_COLOR))
            elif tag == "f":
                idx = []
                for tok in parts[1:]:
                    head = tok.split("/")[0]
                    try:
                        i = int(head)
                    except ValueError:
                        raise ObjParseError(
                            f"{path}:{lineno}: malformed face index {tok!r}") from None
                    if i == 0:
                        raise ObjParseError(f"{path}:{lineno}: face index 0 is invalid")
                    if i < 0:
                        i = len(vertices) + 1 + i
                    if not 1 <= i <= len(vertices):
                        raise ObjParseError(
                            f"{path}:{lineno}: face index {tok} out of range "
                            f"(have {len(vertices)} vertices)")
                    idx.append(i - 1)
                if len(idx) < 3:
                    raise ObjParseError(f"{path}:{lineno}: face needs >= 3 vertices")
                for k in range(1, len(idx) - 1):
                    triangles.append([idx[0], idx[k], idx[k + 1]])
                    face_colors.append(current)
    return Mesh(np.asarray(vertices, dtype=np.float64).reshape(-1, 3),
                np.asarray(triangles, dtype=np.int64).reshape(-1, 3),
                np.asarray(face_colors, dtype=np.float64).reshape(-1, 3))


def to_camera_frame(points, cam: Camera) -> np.ndarray:
    rot = cam.rotation()
    return (np.asarray(points, dtype=np.float64) - cam.position) @ rot


def project(points, cam: Camera, fov_deg: float, res: int):
    """Project world points to pixel coordinates with the shared intrinsics.

    Returns (px, py, z_cam, t_ray); points behind the camera get z_cam <= 0.
    """
    pc = to_camera_frame(points, cam)
    f = focal_px(fov_deg, res)
    c = res / 2.0
    z = pc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        px = pc[:, 0] / z * f + c
        py = pc[:, 1] / z * f + c
    t_ray = np.linalg.norm(pc, axis=1) * np.sign(z)
    return px, py, z, t_ray


def _ray_norm_factor(px, py, f, c):
    """sqrt(u^2+v^2+1) at pixel coords: converts camera z to ray distance."""
    u = (px - c) / f
    v = (py - c) / f
    return np.sqrt(u * u + v * v + 1.0)


def _clip_near(poly, near):
    """Sutherland-Hodgman clip of a camera-space polygon against z = near."""
    out = []
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        ina, inb = a[2] >= near, b[2] >= near
        if ina:
            out.append(a)
        if ina != inb:
            t = (near - a[2]) / (b[2] - a[2])
            out.append(a + t * (b - a))
    return out


def rasterize(mesh: Mesh, cam: Camera, fov_deg: float, resolution: int,
              style: str = "solid") -> RasterOutput:
    """Render the mesh with a z-buffer; nearest surface wins.

    Solid style flat-shades each face under a headlight along the view
    axis; wireframe draws 1-pixel feature-edge lines that write depth.
    """
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    if style not in ("solid", "wireframe"):
        raise ValueError(f"style must be 'solid' or 'wireframe', got {style!r}")
    res = int(resolution)
    color = np.zeros((res, res, 4), dtype=np.float32)
    depth = np.full((res, res), cam.far, dtype=np.float32)
    pose = (cam.position.copy(), cam.orientation.copy())
    if mesh.empty:
        return RasterOutput(color, depth, cam.near, cam.far, pose)

    f = focal_px(fov_deg, res)
    c = res / 2.0
    verts_cam = to_camera_frame(mesh.vertices, cam)
    fwd = np.array([0.0, 0.0, 1.0])
    normals_world = mesh.face_normals()
    rot = cam.rotation()
    normals_cam = normals_world @ rot

    if style == "solid":
        shade = 0.3 + 0.7 * np.abs(normals_cam @ fwd)
        for fi in range(len(mesh.triangles)):
            tri = [verts_cam[i] for i in mesh.triangles[fi]]
            poly = _clip_near(tri, cam.near)
            col = np.clip(mesh.face_colors[fi] * shade[fi], 0.0, 1.0)
            for k in range(1, len(poly) - 1):
                _fill_triangle(color, depth, poly[0], poly[k], poly[k + 1],
                               col, f, c, res, cam.far)
    else:
        edges = mesh.feature_edges()
        edge_color = np.array([0.9, 0.9, 0.9])
        for (a, b) in edges:
            seg = _clip_near([verts_cam[a], verts_cam[b], verts_cam[a]], cam.near)
            if len(seg) < 2:
                continue
            _draw_line(color, depth, seg[0], seg[1], edge_color, f, c, res)
    return RasterOutput(color, depth, cam.near, cam.far, pose)


def _fill_triangle(color, depth, v0, v1, v2, col, f, c, res, far):
    pts = np.stack([v0, v1, v2])
    if np.any(pts[:, 2] <= 0):
        return
    px = pts[:, 0] / pts[:, 2] * f + c
    py = pts[:, 1] / pts[:, 2] * f + c
    inv_z = 1.0 / pts[:, 2]

    x_min = max(int(math.floor(px.min())), 0)
    x_max = min(int(math.ceil(px.max())), res - 1)
    y_min = max(int(math.floor(py.min())), 0)
    y_max = min(int(math.ceil(py.max())), res - 1)
    if x_min > x_max or y_min > y_max:
        return
    area = (px[1] - px[0]) * (py[2] - py[0]) - (py[1] - py[0]) * (px[2] - px[0])
    if abs(area) < 1e-12:
        return

    xs = np.arange(x_min, x_max + 1) + 0.5
    ys = np.arange(y_min, y_max + 1) + 0.5
    X, Y = np.meshgrid(xs, ys)
    w0 = ((px[1] - X) * (py[2] - Y) - (py[1] - Y) * (px[2] - X)) / area
    w1 = ((px[2] - X) * (py[0] - Y) - (py[2] - Y) * (px[0] - X)) / area
    w2 = 1.0 - w0 - w1
    inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
    if not inside.any():
        return
    # perspective-correct depth via linear 1/z, then convert to ray distance
    inv_zi = w0 * inv_z[0] + w1 * inv_z[1] + w2 * inv_z[2]
    z = 1.0 / inv_zi
    t = z * _ray_norm_factor(X, Y, f, c)
    sub_d = depth[y_min:y_max + 1, x_min:x_max + 1]
    win = inside & (t < sub_d)
    sub_d[win] = t[win]
    sub_c = color[y_min:y_max + 1, x_min:x_max + 1]
    sub_c[win, 0] = col[0]
    sub_c[win, 1] = col[1]
    sub_c[win, 2] = col[2]
    sub_c[win, 3] = 1.0


def _draw_line(color, depth, a, b, col, f, c, res):
    pa = np.array([a[0] / a[2] * f + c, a[1] / a[2] * f + c])
    pb = np.array([b[0] / b[2] * f + c, b[1] / b[2] * f + c])
    inv_za, inv_zb = 1.0 / a[2], 1.0 / b[2]

    x0, y0 = int(round(pa[0] - 0.5)), int(round(pa[1] - 0.5))
    x1, y1 = int(round(pb[0] - 0.5)), int(round(pb[1] - 0.5))
    steps = max(abs(x1 - x0), abs(y1 - y0))
    if steps == 0:
        xs = np.array([x0])
        ys = np.array([y0])
        ws = np.array([0.0])
    else:
        ws = np.arange(steps + 1) / steps
        xs = np.round(x0 + (x1 - x0) * ws).astype(int)
        ys = np.round(y0 + (y1 - y0) * ws).astype(int)
    keep = (xs >= 0) & (xs < res) & (ys >= 0) & (ys < res)
    xs, ys, ws = xs[keep], ys[keep], ws[keep]
    if xs.size == 0:
        return
    inv_z = inv_za + (inv_zb - inv_za) * ws
    z = 1.0 / inv_z
    t = z * _ray_norm_factor(xs + 0.5, ys + 0.5, f, c)
    for x, y, ti in zip(xs, ys, t):
        if ti < depth[y, x]:
            depth[y, x] = ti
            color[y, x, :3] = col
            color[y, x, 3] = 1.0
