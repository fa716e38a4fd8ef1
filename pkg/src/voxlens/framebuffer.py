"""Frame and depth buffers shared by the volume and raster paths."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np


@dataclass
class Framebuffer:
    """RGBA float32 image; rgb is premultiplied radiance without background.

    `background` records the clear color so display conversion can composite
    it in; keeping it out of the stored rgb lets fusion composites reuse the
    frame without double-counting the clear color. `pose` optionally tags
    the camera (position, quaternion) that produced the frame.
    """

    rgba: np.ndarray
    background: tuple = (0.0, 0.0, 0.0)
    pose: tuple | None = None

    def __post_init__(self):
        self.rgba = np.ascontiguousarray(self.rgba, dtype=np.float32)
        if self.rgba.ndim != 3 or self.rgba.shape[2] != 4:
            raise ValueError(f"framebuffer must be (h, w, 4), got {self.rgba.shape}")
        self.background = tuple(float(c) for c in self.background)

    @property
    def shape(self):
        return self.rgba.shape[:2]

    @property
    def alpha(self) -> np.ndarray:
        return self.rgba[:, :, 3]

    def composited(self) -> np.ndarray:
        """(h, w, 3) float32 display image: premultiplied rgb over background."""
        bg = np.asarray(self.background, dtype=np.float32)
        t = (1.0 - self.rgba[:, :, 3:4])
        return self.rgba[:, :, :3] + t * bg

    def to_rgba8(self) -> np.ndarray:
        """8-bit export: display rgb over background, alpha = coverage."""
        out = np.empty(self.rgba.shape, dtype=np.uint8)
        rgb = np.clip(self.composited(), 0.0, 1.0)
        out[:, :, :3] = np.round(rgb * 255.0).astype(np.uint8)
        out[:, :, 3] = np.round(np.clip(self.rgba[:, :, 3], 0, 1) * 255).astype(np.uint8)
        return out

    @classmethod
    def blank(cls, shape, background=(0.0, 0.0, 0.0), pose=None):
        return cls(np.zeros((shape[0], shape[1], 4), np.float32), background, pose)


@dataclass
class DepthMap:
    """Per-pixel depth along the ray, world units; `sentinel` marks empty."""

    values: np.ndarray
    near: float
    far: float

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        self.near = float(self.near)
        self.far = float(self.far)

    @property
    def sentinel(self) -> float:
        return self.far


@dataclass
class FrameStats:
    """Measured cost counters for one rendered frame."""

    rays_total: int = 0
    rays_active: int = 0
    samples_total: int = 0
    wall_time_ms: float = 0.0
    skipped_voxel_spans: int = 0

    def as_dict(self) -> dict:
        return {
            "rays_total": int(self.rays_total),
            "rays_active": int(self.rays_active),
            "samples_total": int(self.samples_total),
            "wall_time_ms": float(self.wall_time_ms),
            "skipped_voxel_spans": int(self.skipped_voxel_spans),
        }


def poses_match(a, b, tol=1e-9) -> bool:
    """True when two (position, quaternion) tags agree within tol (q ~ -q)."""
    if a is None or b is None:
        return True
    pa, qa = np.asarray(a[0], float), np.asarray(a[1], float)
    pb, qb = np.asarray(b[0], float), np.asarray(b[1], float)
    if not np.allclose(pa, pb, atol=tol):
        return False
    return np.allclose(qa, qb, atol=tol) or np.allclose(qa, -qb, atol=tol)
