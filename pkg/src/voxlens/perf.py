"""Analytic render-cost model and its calibration against measured frames.

Cost of a frame is resolution x samples-per-ray x per-query cost; the
display-side form replaces resolution with fov x ppd terms plus the
supersampling factor. Per-query cost is calibrated in nanoseconds from a
measured frame since this renderer has no network to count FLOPs for.
"""

from __future__ import annotations

from dataclasses import dataclass

from .framebuffer import FrameStats


@dataclass
class PerfModel:
    """f_bar: cost per field query (ns); c_factor: supersampling constant;
    n_per_ray: expected field queries per cast ray."""

    f_bar: float = 1.0
    c_factor: float = 4.0
    n_per_ray: float = 32.0

    def __post_init__(self):
        for name in ("f_bar", "c_factor", "n_per_ray"):
            v = float(getattr(self, name))
            setattr(self, name, v)
            if not v > 0:
                raise ValueError(f"{name} must be > 0, got {v}")


def predict_cost(model: PerfModel, r_h: float, r_w: float) -> float:
    """Frame cost at a target resolution: r_h * r_w * n_per_ray * f_bar."""
    if r_h < 0 or r_w < 0:
        raise ValueError("resolutions must be >= 0")
    return ((r_h * r_w) * model.n_per_ray) * model.f_bar


def predict_cost_hmd(model: PerfModel, fov_h: float, fov_v: float,
                     ppd: float) -> float:
    """Per-eye cost on a display: fov_h * fov_v * ppd^2 * C * n_per_ray * f_bar.

    Factors are grouped as (fov_h*ppd) * (fov_v*ppd) so that with C = 4 the
    result is bit-identical to predict_cost at the fov*ppd*2 resolution rule.
    """
    if fov_h < 0 or fov_v < 0 or ppd < 0:
        raise ValueError("fov and ppd must be >= 0")
    return ((((fov_h * ppd) * (fov_v * ppd)) * model.c_factor)
            * model.n_per_ray) * model.f_bar


def calibrate(stats: FrameStats, c_factor: float = 4.0) -> PerfModel:
    """Fit f_bar (ns/query) and n_per_ray from one measured frame."""
    if stats.samples_total <= 0 or stats.rays_total <= 0:
        raise ValueError("calibration frame must have cast rays and samples")
    f_bar = stats.wall_time_ms * 1e6 / stats.samples_total
    n_per_ray = stats.samples_total / stats.rays_total
    return PerfModel(f_bar=f_bar, c_factor=c_factor, n_per_ray=max(n_per_ray, 1e-12))


def predicted_frame_ns(model: PerfModel, stats: FrameStats) -> float:
    """Upper-bound cost estimate of a frame from its cast-ray count."""
    return (stats.rays_total * model.n_per_ray) * model.f_bar
