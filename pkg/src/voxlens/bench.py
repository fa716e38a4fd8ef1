"""Trajectory record/replay and the fov x ppd sweep harness.

Sample counts are the asserted quantity; wall-clock numbers are reported
for inspection but depend on the host. Stereo is modeled as two
independent per-eye renders at a configurable eye separation.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .edit import EditCommand, apply_edit
from .field import (DEFAULT_TAU, OccupancyBitfield, RadianceFieldGrid,
                    ScenePrimitive, SceneSpec, make_procedural_grid,
                    rebuild_bitfield)
from .framebuffer import FrameStats
from .lens import Camera, LensConfig, lens_resolution
from .raymarch import MarchConfig, render_frame
from .xform import check_unit_quat, quat_to_matrix

DEFAULT_FOVS = (10.0, 20.0, 30.0, 40.0, 50.0, 60.0)
DEFAULT_PPDS = (15.0, 20.0, 25.0)
DEFAULT_EYE_SEP = 0.064


@dataclass
class TrajectorySample:
    t_ms: float
    position: np.ndarray
    quaternion: np.ndarray

    def __post_init__(self):
        self.t_ms = float(self.t_ms)
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.quaternion = check_unit_quat(self.quaternion)


@dataclass
class Trajectory:
    samples: list

    def __post_init__(self):
        times = [s.t_ms for s in self.samples]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("trajectory timestamps must be strictly increasing")

    def __len__(self):
        return len(self.samples)


@dataclass
class SweepConfig:
    fov_list: tuple = DEFAULT_FOVS
    ppd_list: tuple = DEFAULT_PPDS
    march: MarchConfig = dc_field(default_factory=MarchConfig)
    plane_w: float = 4.0
    far_len: float = 6.0
    near: float = 0.05
    far: float = 10.0
    supersample_c: float = 4.0
    mask_bits: OccupancyBitfield | None = None
    repeat: int = 1
    stereo: bool = False
    eye_sep: float = DEFAULT_EYE_SEP
    threads: int | None = None

    def __post_init__(self):
        if not self.fov_list or not self.ppd_list:
            raise ValueError("fov_list and ppd_list must be non-empty")
        for f in self.fov_list:
            LensConfig(fov_deg=f, ppd=self.ppd_list[0], plane_w=self.plane_w,
                       far_len=self.far_len, supersample_c=self.supersample_c)
        if self.repeat < 1:
            raise ValueError("repeat must be >= 1")


@dataclass
class SweepRow:
    fov_deg: float
    ppd: float
    resolution: int
    masked: bool
    mean_ft_ms: float
    p95_ft_ms: float
    mean_samples: float
    mean_active_rays: float


def _eye_cameras(sample: TrajectorySample, near, far, stereo, eye_sep):
    base = Camera(sample.position, sample.quaternion, near=near, far=far)
    if not stereo:
        return [base]
    right = quat_to_matrix(sample.quaternion) @ np.array([1.0, 0.0, 0.0])
    half = eye_sep / 2.0
    return [Camera(sample.position - half * right, sample.quaternion, near, far),
            Camera(sample.position + half * right, sample.quaternion, near, far)]


def replay(traj: Trajectory, grid: RadianceFieldGrid, bits: OccupancyBitfield,
           lens: LensConfig, cfg: MarchConfig | None = None, scene_box=None,
           alignment=None, near=0.05, far=10.0, stereo=False,
           eye_sep=DEFAULT_EYE_SEP, threads=None):
    """Render every trajectory sample; returns (per-frame stats, summary).

    Per-frame stats for stereo sum both eyes. Sample counts are
    deterministic across replays; timings are not.
    """
    if len(traj) == 0:
        raise ValueError("trajectory must contain at least one sample")
    cfg = cfg or MarchConfig()
    stats_list = []
    for sample in traj.samples:
        frame_stats = FrameStats()
        for cam in _eye_cameras(sample, near, far, stereo, eye_sep):
            r = render_frame(grid, bits, cam, lens, scene_box=scene_box,
                             cfg=cfg, alignment=alignment, threads=threads)
            frame_stats.rays_total += r.stats.rays_total
            frame_stats.rays_active += r.stats.rays_active
            frame_stats.samples_total += r.stats.samples_total
            frame_stats.wall_time_ms += r.stats.wall_time_ms
            frame_stats.skipped_voxel_spans += r.stats.skipped_voxel_spans
        stats_list.append(frame_stats)

    ft = np.array([s.wall_time_ms for s in stats_list])
    summary = {
        "frames": len(stats_list),
        "mean_ft_ms": float(ft.mean()),
        "median_ft_ms": float(np.median(ft)),
        "p95_ft_ms": float(np.percentile(ft, 95)),
        "mean_samples": float(np.mean([s.samples_total for s in stats_list])),
        "mean_active_rays": float(np.mean([s.rays_active for s in stats_list])),
    }
    return stats_list, summary


def sweep(traj: Trajectory, grid: RadianceFieldGrid, cfg: SweepConfig):
    """Replay the trajectory for every (fov, ppd) configuration.

    Emits one row per config, plus a masked twin when cfg.mask_bits is
    set; rows are ordered by (ppd, fov, masked).
    """
    base_bits, _ = rebuild_bitfield(grid, DEFAULT_TAU)
    variants = [(False, base_bits)]
    if cfg.mask_bits is not None:
        if cfg.mask_bits.dims != grid.dims:
            raise ValueError(
                f"mask dims {cfg.mask_bits.dims} != grid dims {grid.dims}")
        variants.append((True, cfg.mask_bits))

    rows = []
    for ppd in cfg.ppd_list:
        for fov in cfg.fov_list:
            for masked, bits in variants:
                lens = LensConfig(fov_deg=fov, ppd=ppd, plane_w=cfg.plane_w,
                                  far_len=cfg.far_len,
                                  supersample_c=cfg.supersample_c)
                all_stats = []
                for _ in range(cfg.repeat):
                    try:
                        stats_list, _ = replay(
                            traj, grid, bits, lens, cfg.march,
                            near=cfg.near, far=cfg.far, stereo=cfg.stereo,
                            eye_sep=cfg.eye_sep, threads=cfg.threads)
                    except Exception as exc:
                        raise RuntimeError(
                            f"sweep config fov={fov} ppd={ppd} "
                            f"masked={masked} failed: {exc}") from exc
                    all_stats.extend(stats_list)
                ft = np.array([s.wall_time_ms for s in all_stats])
                rows.append(SweepRow(
                    fov_deg=fov, ppd=ppd,
                    resolution=lens_resolution(fov, ppd), masked=masked,
                    mean_ft_ms=float(ft.mean()),
                    p95_ft_ms=float(np.percentile(ft, 95)),
                    mean_samples=float(np.mean(
                        [s.samples_total for s in all_stats])),
                    mean_active_rays=float(np.mean(
                        [s.rays_active for s in all_stats])),
                ))
    return rows


# --- the standard benchmark scene ---------------------------------------

BENCH_TARGETS = (
    ((1.0, 1.0, 1.2), 0.12),
    ((1.35, 0.95, 1.1), 0.10),
    ((0.7, 1.3, 0.9), 0.10),
)
BENCH_TARGET_COLORS = ((0.9, 0.2, 0.1), (0.1, 0.8, 0.2), (0.2, 0.3, 0.9))
BENCH_POSE = ((1.0, 1.0, 0.15), (0.0, 0.0, 0.0, 1.0))


def benchmark_scene_spec(n: int = 128) -> SceneSpec:
    """Room-like scene: opaque shell walls plus three inspection targets.

    The walls keep every ray busy at any fov (monotone sample growth); the
    targets sit at increasing angular offsets from the standard pose so a
    targets-only mask also grows with fov.
    """
    wall = dict(color=(0.55, 0.55, 0.6), density=150.0)
    prims = [
        ScenePrimitive(kind="slab", axis=2, lo=1.75, hi=1.95, **wall),
        ScenePrimitive(kind="box", min_corner=(0.0, 0.0, 0.0),
                       max_corner=(0.12, 2.0, 2.0), **wall),
        ScenePrimitive(kind="box", min_corner=(1.88, 0.0, 0.0),
                       max_corner=(2.0, 2.0, 2.0), **wall),
        ScenePrimitive(kind="box", min_corner=(0.0, 0.0, 0.0),
                       max_corner=(2.0, 0.12, 2.0), **wall),
        ScenePrimitive(kind="box", min_corner=(0.0, 1.88, 0.0),
                       max_corner=(2.0, 2.0, 2.0), **wall),
    ]
    for (center, radius), color in zip(BENCH_TARGETS, BENCH_TARGET_COLORS):
        prims.append(ScenePrimitive(kind="sphere", center=center, radius=radius,
                                    color=color, density=60.0))
    return SceneSpec(dims=(n, n, n), origin=(0.0, 0.0, 0.0),
                     voxel_size=2.0 / n, primitives=prims)


def benchmark_scene(n: int = 128) -> RadianceFieldGrid:
    return make_procedural_grid(benchmark_scene_spec(n))


def benchmark_trajectory(frames: int = 1) -> Trajectory:
    pos, quat = BENCH_POSE
    return Trajectory([TrajectorySample(t_ms=33.0 * i + 1.0, position=pos,
                                        quaternion=quat)
                       for i in range(frames)])


def targets_only_mask(grid: RadianceFieldGrid, tau: float = DEFAULT_TAU,
                      margin: float = 0.05) -> OccupancyBitfield:
    """Erase everything, then reveal spheres around the benchmark targets."""
    bits, _ = rebuild_bitfield(grid, tau)
    diag = float(np.linalg.norm(np.asarray(grid.dims) * grid.voxel_size))
    center = grid.origin + np.asarray(grid.dims) * grid.voxel_size / 2.0
    bits = apply_edit(grid, bits,
                      EditCommand(mode="erase", center=center, radius=2 * diag),
                      tau)
    for (c, r) in BENCH_TARGETS:
        bits = apply_edit(grid, bits,
                          EditCommand(mode="reveal", center=c, radius=r + margin),
                          tau)
    return bits
