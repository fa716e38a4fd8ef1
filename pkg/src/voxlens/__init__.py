"""voxlens: focus+context volumetric rendering with rasterized CAD context.

A dense voxel radiance field is ray-marched inside a view-following box
volume sized by field-of-view and pixel-density budgets, fused with a
software-rasterized mesh through tunnel, merge, and depth-occlusion
composites, and measured by a replayable benchmark harness.
"""

from .field import (CropBox, FieldSample, OccupancyBitfield,
                    RadianceFieldGrid, apply_model_transform,
                    make_procedural_grid, rebuild_bitfield, sample_field,
                    support_bitfield)
from .framebuffer import DepthMap, Framebuffer, FrameStats
from .lens import Camera, LensConfig, Ray, generate_rays, lens_box, lens_resolution
from .raymarch import MarchConfig, PixelResult, dda_spans, integrate_ray, render_frame

__version__ = "0.1.0"

__all__ = [
    "Camera", "CropBox", "DepthMap", "FieldSample", "Framebuffer",
    "FrameStats", "LensConfig", "MarchConfig", "OccupancyBitfield",
    "PixelResult", "RadianceFieldGrid", "Ray", "apply_model_transform",
    "dda_spans", "generate_rays", "integrate_ray", "lens_box",
    "lens_resolution", "make_procedural_grid", "rebuild_bitfield",
    "render_frame", "sample_field", "support_bitfield", "__version__",
]
