"""Camera model, box-shaped render volume, and budgeted ray generation.

The render region is a box rather than a full view pyramid: a square image
plane of width `plane_w` anchored at the camera near plane, extruded to
depth `far_len` along the view axis. Rays are perspective but clipped to
that box, so peripheral rays get shorter active intervals.

Camera frame convention: +x right, +y down (image rows), +z forward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .field import CropBox
from .xform import Trs, check_unit_quat, quat_to_matrix

MAX_FOV_DEG = 120.0


@dataclass
class Camera:
    position: np.ndarray
    orientation: np.ndarray = dc_field(default_factory=lambda: np.array([0., 0., 0., 1.]))
    near: float = 0.05
    far: float = 100.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.orientation = check_unit_quat(self.orientation)
        self.near = float(self.near)
        self.far = float(self.far)
        if not self.near > 0:
            raise ValueError(f"near must be > 0, got {self.near}")
        if not self.far > self.near:
            raise ValueError(f"far ({self.far}) must exceed near ({self.near})")

    def rotation(self) -> np.ndarray:
        """Camera-to-world rotation matrix."""
        return quat_to_matrix(self.orientation)

    def forward(self) -> np.ndarray:
        return self.rotation() @ np.array([0.0, 0.0, 1.0])


@dataclass
class LensConfig:
    """Square lens: field of view, pixel density, and the box volume bounds."""

    fov_deg: float = 30.0
    ppd: float = 20.0
    plane_w: float = 1.0
    far_len: float = 4.0
    supersample_c: float = 4.0

    def __post_init__(self):
        if not 0 < self.fov_deg <= MAX_FOV_DEG:
            raise ValueError(f"fov_deg out of range (0, {MAX_FOV_DEG}]: {self.fov_deg}")
        if not self.ppd > 0:
            raise ValueError(f"ppd must be > 0, got {self.ppd}")
        if not self.plane_w > 0:
            raise ValueError(f"plane_w must be > 0, got {self.plane_w}")
        if self.supersample_c < 1:
            raise ValueError(f"supersample_c must be >= 1, got {self.supersample_c}")

    def validate_against(self, cam: Camera):
        if not self.far_len > cam.near:
            raise ValueError(
                f"far_len ({self.far_len}) must exceed camera near ({cam.near})")

    @property
    def ss_axis(self) -> int:
        """Per-axis supersampling factor (total factor = ss_axis**2)."""
        return max(1, int(round(math.sqrt(self.supersample_c))))


@dataclass
class Ray:
    origin: np.ndarray
    dir: np.ndarray
    t_near: float
    t_far: float

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.dir = np.asarray(self.dir, dtype=np.float64).reshape(3)
        n = float(np.linalg.norm(self.dir))
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"ray direction norm {n} not within 1e-6 of 1")
        self.t_near = float(self.t_near)
        self.t_far = float(self.t_far)

    @property
    def active(self) -> bool:
        return self.t_near <= self.t_far


@dataclass
class RayBundle:
    """One perspective ray per pixel of an (n x n) image, row-major."""

    res: int
    origins: np.ndarray   # (res*res, 3)
    dirs: np.ndarray      # (res*res, 3) unit
    t_near: np.ndarray    # (res*res,)
    t_far: np.ndarray     # (res*res,); empty intervals marked t_near > t_far

    @property
    def active(self) -> np.ndarray:
        return self.t_near <= self.t_far

    def ray(self, i: int, j: int) -> Ray:
        k = i * self.res + j
        return Ray(self.origins[k], self.dirs[k], self.t_near[k], self.t_far[k])


def lens_resolution(fov_deg: float, ppd: float) -> int:
    """Pixels per side for a square lens image: round(fov * ppd * 2).

    The factor 2 covers the supersampling headroom demanded for aliasing
    reduction on HMD-class displays.
    """
    if fov_deg < 0 or ppd < 0:
        raise ValueError("fov_deg and ppd must be >= 0")
    return int(round(fov_deg * ppd * 2))


def focal_px(fov_deg: float, res: int) -> float:
    """Pinhole focal length in pixels for a square image of side `res`."""
    return (res / 2.0) / math.tan(math.radians(fov_deg) / 2.0)


def pixel_dirs_cam(fov_deg: float, res: int) -> np.ndarray:
    """Unit directions through every pixel center, camera frame, (res,res,3)."""
    f = focal_px(fov_deg, res)
    c = res / 2.0
    u = (np.arange(res) + 0.5 - c) / f
    V, U = np.meshgrid(u, u, indexing="ij")  # V: rows (y), U: cols (x)
    d = np.stack([U, V, np.ones_like(U)], axis=-1)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def lens_box(cam: Camera, lens: LensConfig) -> CropBox:
    """The view-following box volume, expressed in the camera frame.

    Cross-section plane_w x plane_w centered on the view axis, from the near
    plane to depth far_len. The box's model transform carries the camera
    pose, so world-space queries go through apply_model_transform.
    """
    lens.validate_against(cam)
    half = lens.plane_w / 2.0
    return CropBox(
        min_corner=np.array([-half, -half, cam.near]),
        max_corner=np.array([half, half, lens.far_len]),
        model_transform=Trs(translation=cam.position.copy(),
                            rotation_quat=cam.orientation.copy(),
                            scale=1.0),
    )


def _slab_interval(o, d, lo, hi):
    """Intersection interval of a 1D ray o + t*d with [lo, hi]."""
    if abs(d) < 1e-300:
        return (-math.inf, math.inf) if lo <= o <= hi else (math.inf, -math.inf)
    a, b = (lo - o) / d, (hi - o) / d
    return (a, b) if a <= b else (b, a)


def clip_to_box_local(o_local, d_local, box_min, box_max):
    """Slab-test a ray already in the box's local frame; returns (t0, t1)."""
    t0, t1 = -math.inf, math.inf
    for a in range(3):
        lo, hi = _slab_interval(o_local[a], d_local[a], box_min[a], box_max[a])
        t0, t1 = max(t0, lo), min(t1, hi)
    return t0, t1


def clip_bundle_to_box(origins, dirs, box: CropBox):
    """Vectorized slab test of world rays against a TRS-transformed CropBox.

    Returns per-ray (t0, t1) in world units along the unit directions.
    """
    trs = box.model_transform
    r = quat_to_matrix(trs.rotation_quat)
    o_l = ((origins - trs.translation) @ r) / trs.scale
    d_l = dirs @ r  # unit length preserved by rotation
    t0 = np.full(origins.shape[0], -np.inf)
    t1 = np.full(origins.shape[0], np.inf)
    for a in range(3):
        d = d_l[:, a]
        o = o_l[:, a]
        par = np.abs(d) < 1e-300
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (box.min_corner[a] - o) / d
            tb = (box.max_corner[a] - o) / d
        lo = np.minimum(ta, tb)
        hi = np.maximum(ta, tb)
        inside = (o >= box.min_corner[a]) & (o <= box.max_corner[a])
        lo = np.where(par, np.where(inside, -np.inf, np.inf), lo)
        hi = np.where(par, np.where(inside, np.inf, -np.inf), hi)
        t0 = np.maximum(t0, lo)
        t1 = np.minimum(t1, hi)
    return t0 * trs.scale, t1 * trs.scale


def generate_rays(cam: Camera, lens: LensConfig, scene_box: CropBox | None = None,
                  res: int | None = None) -> RayBundle:
    """Build the per-pixel rays of the lens image, clipped to the render volumes.

    Each ray's interval is [near, far] intersected with the lens box and,
    when given, the scene crop box. `res` overrides the lens_resolution
    value (used for supersampled grids).
    """
    if res is None:
        res = lens_resolution(lens.fov_deg, lens.ppd)
    if res < 1:
        return RayBundle(0, np.zeros((0, 3)), np.zeros((0, 3)),
                         np.zeros(0), np.zeros(0))
    rot = cam.rotation()
    dirs_cam = pixel_dirs_cam(lens.fov_deg, res).reshape(-1, 3)
    dirs = dirs_cam @ rot.T
    origins = np.broadcast_to(cam.position, dirs.shape).copy()

    t0 = np.full(dirs.shape[0], cam.near)
    t1 = np.full(dirs.shape[0], cam.far)

    lb = lens_box(cam, lens)
    b0, b1 = clip_bundle_to_box(origins, dirs, lb)
    t0, t1 = np.maximum(t0, b0), np.minimum(t1, b1)

    if scene_box is not None:
        s0, s1 = clip_bundle_to_box(origins, dirs, scene_box)
        t0, t1 = np.maximum(t0, s0), np.minimum(t1, s1)

    dead = t0 > t1
    t0[dead], t1[dead] = np.inf, -np.inf
    return RayBundle(res, origins, dirs, t0, t1)
