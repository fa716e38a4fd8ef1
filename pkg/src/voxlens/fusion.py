"""Focus+context composites: the tunnel blend (high-fidelity volume center,
raster periphery), a translucent merge for alignment checking, and depth
occlusion between the volume and raster paths.

The tunnel mask is angular: a pixel's weight depends on its eccentricity
from the view axis, not its pixel radius, so the mask is resolution
independent and matches the field-of-view budget semantics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .field import OccupancyBitfield, RadianceFieldGrid
from .framebuffer import DepthMap, Framebuffer, poses_match
from .lens import Camera, LensConfig, focal_px
from .raster import RasterOutput
from .raymarch import MarchConfig, RenderResult, render_frame
from .xform import Trs

DEFAULT_FEATHER_DEG = 2.0


class FusionPoseError(ValueError):
    """Raised when frames with different camera poses would be fused."""


@dataclass
class TunnelConfig:
    """Angular lens mask parameters and merge translucency.

    `lens_radius_frac`, when set, sizes the lens circle as a fraction of
    the peripheral frame's half-diagonal angle instead of using the lens
    field of view directly.
    """

    feather_deg: float = DEFAULT_FEATHER_DEG
    merge_alpha: float = 1.0
    lens_radius_frac: float | None = None

    def __post_init__(self):
        if self.feather_deg < 0:
            raise ValueError(f"feather_deg must be >= 0, got {self.feather_deg}")
        if not 0.0 <= self.merge_alpha <= 1.0:
            raise ValueError(f"merge_alpha must be in [0, 1], got {self.merge_alpha}")


@dataclass
class FusionTransform:
    """TRS mapping field model space into the raster (CAD) world space."""

    trs: Trs = dc_field(default_factory=Trs)

    def matrix(self) -> np.ndarray:
        return self.trs.matrix()

    def to_dict(self) -> dict:
        return {
            "translation": [float(x) for x in self.trs.translation],
            "rotation_quat": [float(x) for x in self.trs.rotation_quat],
            "scale": float(self.trs.scale),
            "matrix": [float(x) for x in self.matrix().reshape(-1)],
        }

    @classmethod
    def from_dict(cls, d: dict):
        trs = Trs(np.asarray(d["translation"], float),
                  np.asarray(d["rotation_quat"], float),
                  float(d["scale"]))
        t = cls(trs)
        stored = np.asarray(d.get("matrix", t.matrix().reshape(-1)), float)
        if stored.size != 16:
            raise ValueError("fusion transform matrix must have 16 entries")
        if not np.allclose(stored.reshape(4, 4), t.matrix(), atol=1e-5):
            raise ValueError("stored matrix inconsistent with TRS decomposition")
        return t


def eccentricity_map_deg(fov_deg: float, res: int) -> np.ndarray:
    """Angle (degrees) between each pixel-center ray and the view axis."""
    f = focal_px(fov_deg, res)
    c = res / 2.0
    u = (np.arange(res) + 0.5 - c) / f
    V, U = np.meshgrid(u, u, indexing="ij")
    return np.degrees(np.arctan(np.sqrt(U * U + V * V)))


def tunnel_weight(ecc_deg, lens_fov_deg: float, feather_deg: float):
    """Smoothstep lens mask: 1 inside (fov/2 - feather), 0 outside fov/2."""
    ecc = np.asarray(ecc_deg, dtype=np.float64)
    outer = lens_fov_deg / 2.0
    inner = outer - feather_deg
    if feather_deg <= 0:
        return (ecc < outer).astype(np.float64)
    t = np.clip((ecc - inner) / (outer - inner), 0.0, 1.0)
    return 1.0 - (t * t * (3.0 - 2.0 * t))


def _over(top_rgb, top_a, bottom_rgb, bottom_a):
    """Premultiplied over: returns (rgb, a)."""
    inv = 1.0 - top_a
    return top_rgb + inv * bottom_rgb, top_a + inv * bottom_a


def _resample_to(volume: Framebuffer, vol_fov_deg: float,
                 out_fov_deg: float, out_res: int) -> np.ndarray:
    """Map the lens frame onto the output grid (gnomonic, bilinear)."""
    if volume.shape == (out_res, out_res) and abs(vol_fov_deg - out_fov_deg) < 1e-12:
        return volume.rgba.astype(np.float64)
    res_in = volume.shape[0]
    f_out = focal_px(out_fov_deg, out_res)
    c_out = out_res / 2.0
    f_in = focal_px(vol_fov_deg, res_in)
    c_in = res_in / 2.0
    u = (np.arange(out_res) + 0.5 - c_out) / f_out
    V, U = np.meshgrid(u, u, indexing="ij")
    x = U * f_in + c_in - 0.5
    y = V * f_in + c_in - 0.5
    x0 = np.clip(np.floor(x).astype(int), 0, res_in - 1)
    y0 = np.clip(np.floor(y).astype(int), 0, res_in - 1)
    x1 = np.clip(x0 + 1, 0, res_in - 1)
    y1 = np.clip(y0 + 1, 0, res_in - 1)
    fx = np.clip(x - x0, 0.0, 1.0)[..., None]
    fy = np.clip(y - y0, 0.0, 1.0)[..., None]
    img = volume.rgba.astype(np.float64)
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    out = top * (1 - fy) + bot * fy
    # outside the lens image there is no volume contribution
    oob = (x < -0.5) | (x > res_in - 0.5) | (y < -0.5) | (y > res_in - 0.5)
    out[oob] = 0.0
    return out


def composite_tunnel(volume: Framebuffer, raster: RasterOutput, cfg: TunnelConfig,
                     lens_fov_deg: float, out_fov_deg: float | None = None,
                     ecc_deg: np.ndarray | None = None) -> Framebuffer:
    """Blend the volume frame into the raster periphery by angular weight.

    Inside the lens circle the output is the volume frame composited over
    the raster (volume alpha scaled by cfg.merge_alpha); outside it is the
    raster alone; a smoothstep feather bridges the two. Refuses frames
    whose camera poses differ.
    """
    if not poses_match(volume.pose, raster.pose):
        raise FusionPoseError("volume and raster frames were rendered from "
                              "different camera poses")
    out_res = raster.color.shape[0]
    if out_fov_deg is None:
        out_fov_deg = lens_fov_deg
    if lens_fov_deg > out_fov_deg + 1e-9:
        raise ValueError("lens fov must not exceed the peripheral fov")
    if ecc_deg is None:
        ecc_deg = eccentricity_map_deg(out_fov_deg, out_res)
    ecc_deg = np.asarray(ecc_deg, dtype=np.float64)
    if ecc_deg.shape != (out_res, out_res):
        raise ValueError("eccentricity map shape must match the raster frame")

    if cfg.lens_radius_frac is not None:
        half_diag = math.degrees(math.atan(
            math.sqrt(2.0) * math.tan(math.radians(out_fov_deg) / 2.0)))
        mask_fov = 2.0 * cfg.lens_radius_frac * half_diag
    else:
        mask_fov = lens_fov_deg
    w = tunnel_weight(ecc_deg, mask_fov, cfg.feather_deg)[..., None]

    vol_rgba = _resample_to(volume, lens_fov_deg, out_fov_deg, out_res)
    ras = raster.color.astype(np.float64)
    n_a = vol_rgba[:, :, 3:4] * cfg.merge_alpha
    n_rgb = vol_rgba[:, :, :3] * cfg.merge_alpha
    over_rgb, over_a = _over(n_rgb, n_a, ras[:, :, :3], ras[:, :, 3:4])

    out = np.empty((out_res, out_res, 4), dtype=np.float64)
    out[:, :, :3] = w * over_rgb + (1.0 - w) * ras[:, :, :3]
    out[:, :, 3:4] = w * over_a + (1.0 - w) * ras[:, :, 3:4]
    return Framebuffer(out.astype(np.float32), volume.background, pose=raster.pose)


def composite_merge(volume: Framebuffer, raster: RasterOutput,
                    merge_alpha: float) -> Framebuffer:
    """Translucent whole-frame merge used to validate alignment visually."""
    cfg = TunnelConfig(feather_deg=0.0, merge_alpha=merge_alpha)
    if not poses_match(volume.pose, raster.pose):
        raise FusionPoseError("volume and raster frames were rendered from "
                              "different camera poses")
    out_res = raster.color.shape[0]
    vol_rgba = volume.rgba.astype(np.float64)
    if volume.shape != raster.color.shape[:2]:
        raise ValueError("merge requires frames on the same pixel grid")
    ras = raster.color.astype(np.float64)
    n_a = vol_rgba[:, :, 3:4] * cfg.merge_alpha
    n_rgb = vol_rgba[:, :, :3] * cfg.merge_alpha
    rgb, a = _over(n_rgb, n_a, ras[:, :, :3], ras[:, :, 3:4])
    out = np.concatenate([rgb, a], axis=2).astype(np.float32)
    return Framebuffer(out, volume.background, pose=raster.pose)


@dataclass
class OcclusionScene:
    """Scene handle letting depth_occlude re-march up to the raster surface."""

    grid: RadianceFieldGrid
    bits: OccupancyBitfield
    cam: Camera
    lens: LensConfig
    cfg: MarchConfig = dc_field(default_factory=MarchConfig)
    scene_box: object = None
    alignment: Trs | None = None
    threads: int | None = None


def depth_occlude(volume: Framebuffer, volume_depth: DepthMap, raster: RasterOutput,
                  scene: OcclusionScene | None = None) -> Framebuffer:
    """Merge volume and raster by per-pixel depth.

    With a scene handle, the volume is re-marched with each pixel's far
    bound clipped to the raster surface, giving physically correct
    attenuation of the raster by the volume in front of it (depth ties go
    to the raster because marching stops strictly before the surface).
    Without a scene, a per-pixel binary depth test picks the front layer
    and composites it over the other.
    """
    if not poses_match(volume.pose, raster.pose):
        raise FusionPoseError("volume and raster frames were rendered from "
                              "different camera poses")
    if scene is not None:
        result = render_frame(scene.grid, scene.bits, scene.cam, scene.lens,
                              scene_box=scene.scene_box, cfg=scene.cfg,
                              alignment=scene.alignment, threads=scene.threads,
                              tmax_map=raster.depth)
        vol = result.frame.rgba.astype(np.float64)
        ras = raster.color.astype(np.float64)
        rgb, a = _over(vol[:, :, :3], vol[:, :, 3:4], ras[:, :, :3], ras[:, :, 3:4])
        out = np.concatenate([rgb, a], axis=2).astype(np.float32)
        return Framebuffer(out, volume.background, pose=raster.pose)

    vol = volume.rgba.astype(np.float64)
    ras = raster.color.astype(np.float64)
    vd = np.asarray(volume_depth.values, dtype=np.float64)
    rd = np.asarray(raster.depth, dtype=np.float64)
    volume_front = vd < rd
    out = np.empty_like(vol)
    # volume in front: volume over raster; raster in front or tie: raster over volume
    v_rgb, v_a = _over(vol[:, :, :3], vol[:, :, 3:4], ras[:, :, :3], ras[:, :, 3:4])
    r_rgb, r_a = _over(ras[:, :, :3], ras[:, :, 3:4], vol[:, :, :3], vol[:, :, 3:4])
    m = volume_front[..., None]
    out[:, :, :3] = np.where(m, v_rgb, r_rgb)
    out[:, :, 3:4] = np.where(m, v_a, r_a)
    return Framebuffer(out.astype(np.float32), volume.background, pose=raster.pose)


def set_alignment(state, t: FusionTransform) -> FusionTransform:
    """Install an alignment on a session-like object; rejects scale 0."""
    if not isinstance(t, FusionTransform):
        t = FusionTransform(t)
    if t.trs.scale <= 0 or not np.isfinite(t.matrix()).all():
        raise ValueError("alignment transform must be invertible")
    state.alignment = t
    return t


def get_alignment(state) -> FusionTransform:
    a = getattr(state, "alignment", None)
    return a if a is not None else FusionTransform()
