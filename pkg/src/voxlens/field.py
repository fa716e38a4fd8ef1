"""Dense voxel radiance field, occupancy bitfield, and crop-box model transform.

The field maps a 3D position (and nominally a view direction) to an RGB
emission and a volume density. The realization here is a dense voxel grid
with trilinear interpolation between voxel centers; the view direction is
accepted but ignored, keeping the field deterministic and oracle-checkable.
Axis order is (h, w, l) with the l index fastest in memory.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import ndimage

from .xform import Trs

# Default render-eligibility threshold on density, per world unit.
DEFAULT_TAU = 0.01


@dataclass
class FieldSample:
    """One field query result: emission color in [0,1]^3 and density >= 0."""

    color: np.ndarray
    density: float

    def __post_init__(self):
        self.color = np.asarray(self.color, dtype=np.float64).reshape(3)
        self.density = float(self.density)


@dataclass
class RadianceFieldGrid:
    """Dense (h, w, l) voxel grid of emission + density.

    `sigma` has shape (h, w, l) float32; `color` has shape (h, w, l, 3)
    float32. Voxel (i, j, k) is centered at origin + (i+.5, j+.5, k+.5) *
    voxel_size and owns the axis-aligned cube of side voxel_size around
    that center.
    """

    dims: tuple
    origin: np.ndarray
    voxel_size: float
    sigma: np.ndarray
    color: np.ndarray

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if len(self.dims) != 3 or any(d < 1 for d in self.dims):
            raise ValueError(f"dims must be three counts >= 1, got {self.dims}")
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.voxel_size = float(self.voxel_size)
        if not self.voxel_size > 0:
            raise ValueError(f"voxel_size must be > 0, got {self.voxel_size}")
        self.sigma = np.ascontiguousarray(self.sigma, dtype=np.float32)
        self.color = np.ascontiguousarray(self.color, dtype=np.float32)
        if self.sigma.shape != self.dims:
            raise ValueError(f"sigma shape {self.sigma.shape} != dims {self.dims}")
        if self.color.shape != self.dims + (3,):
            raise ValueError(f"color shape {self.color.shape} != dims + (3,)")

    @classmethod
    def empty(cls, dims, origin=(0.0, 0.0, 0.0), voxel_size=1.0):
        dims = tuple(int(d) for d in dims)
        return cls(dims, origin, voxel_size,
                   np.zeros(dims, np.float32), np.zeros(dims + (3,), np.float32))

    @property
    def aabb_min(self) -> np.ndarray:
        return self.origin

    @property
    def aabb_max(self) -> np.ndarray:
        return self.origin + np.asarray(self.dims) * self.voxel_size

    def voxel_centers(self) -> tuple:
        """Per-axis 1D arrays of voxel-center coordinates."""
        return tuple(self.origin[a] + (np.arange(self.dims[a]) + 0.5) * self.voxel_size
                     for a in range(3))

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.asarray(self.dims, np.int64).tobytes())
        h.update(self.origin.astype("<f8").tobytes())
        h.update(np.float64(self.voxel_size).tobytes())
        h.update(self.sigma.tobytes())
        h.update(self.color.tobytes())
        return h.hexdigest()


@dataclass
class OccupancyBitfield:
    """One bit per voxel, packed LSB-first; bit=1 means render-eligible."""

    dims: tuple
    bits: np.ndarray

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        n = int(np.prod(self.dims))
        expected = (n + 7) // 8
        self.bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        if self.bits.shape != (expected,):
            raise ValueError(
                f"bitfield for dims {self.dims} needs {expected} bytes, "
                f"got shape {self.bits.shape}")

    @classmethod
    def from_dense(cls, dense: np.ndarray):
        dense = np.asarray(dense)
        packed = np.packbits(dense.reshape(-1).astype(bool), bitorder="little")
        return cls(dense.shape, packed)

    @classmethod
    def full(cls, dims, value=True):
        return cls.from_dense(np.full(tuple(dims), bool(value)))

    def as_dense(self) -> np.ndarray:
        n = int(np.prod(self.dims))
        flat = np.unpackbits(self.bits, count=n, bitorder="little").astype(bool)
        return flat.reshape(self.dims)

    def popcount(self) -> int:
        n = int(np.prod(self.dims))
        return int(np.unpackbits(self.bits, count=n, bitorder="little").sum())

    def copy(self):
        return OccupancyBitfield(self.dims, self.bits.copy())

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.asarray(self.dims, np.int64).tobytes())
        h.update(self.bits.tobytes())
        return h.hexdigest()


@dataclass
class CropBox:
    """Axis-aligned render volume in model space plus its TRS into world space."""

    min_corner: np.ndarray
    max_corner: np.ndarray
    model_transform: Trs = dc_field(default_factory=Trs)

    def __post_init__(self):
        self.min_corner = np.asarray(self.min_corner, dtype=np.float64).reshape(3)
        self.max_corner = np.asarray(self.max_corner, dtype=np.float64).reshape(3)
        if not np.all(self.min_corner < self.max_corner):
            raise ValueError(
                f"crop box min {self.min_corner} must be < max {self.max_corner} "
                "componentwise")


def apply_model_transform(box: CropBox, p) -> np.ndarray:
    """Map a model-space point to world space: scale, then rotate, then translate."""
    return box.model_transform.apply(p)


def sample_field(grid: RadianceFieldGrid, p, d=None) -> FieldSample:
    """Trilinearly interpolate the grid at world point p; d is ignored.

    Points outside the grid AABB return density 0 and black. Inside, the
    interpolation lattice sits on voxel centers with clamped edge nodes.
    """
    color, sigma = sample_many(grid, np.asarray(p, dtype=np.float64).reshape(1, 3))
    return FieldSample(color[0], float(sigma[0]))


def sample_many(grid: RadianceFieldGrid, pts: np.ndarray):
    """Vectorized trilinear sampling; returns (colors (n,3), sigmas (n,))."""
    pts = np.asarray(pts, dtype=np.float64)
    n = pts.shape[0]
    inside = np.all((pts >= grid.aabb_min) & (pts <= grid.aabb_max), axis=1)
    colors = np.zeros((n, 3), dtype=np.float64)
    sigmas = np.zeros(n, dtype=np.float64)
    if not inside.any():
        return colors, sigmas

    q = (pts[inside] - grid.origin) / grid.voxel_size - 0.5
    i0 = np.floor(q).astype(np.int64)
    f = q - i0
    dims = np.asarray(grid.dims)
    ia = np.clip(i0, 0, dims - 1)
    ib = np.clip(i0 + 1, 0, dims - 1)

    c_acc = np.zeros((q.shape[0], 3), dtype=np.float64)
    s_acc = np.zeros(q.shape[0], dtype=np.float64)
    for bx in (0, 1):
        wx = f[:, 0] if bx else 1.0 - f[:, 0]
        ix = ib[:, 0] if bx else ia[:, 0]
        for by in (0, 1):
            wy = f[:, 1] if by else 1.0 - f[:, 1]
            iy = ib[:, 1] if by else ia[:, 1]
            for bz in (0, 1):
                wz = f[:, 2] if bz else 1.0 - f[:, 2]
                iz = ib[:, 2] if bz else ia[:, 2]
                w = wx * wy * wz
                s_acc += w * grid.sigma[ix, iy, iz]
                c_acc += w[:, None] * grid.color[ix, iy, iz]
    colors[inside] = c_acc
    sigmas[inside] = s_acc
    return colors, sigmas


def rebuild_bitfield(grid: RadianceFieldGrid, tau: float = DEFAULT_TAU):
    """Bitfield with bit=1 exactly where voxel density >= tau.

    Returns (bitfield, set_bit_count).
    """
    if tau < 0:
        raise ValueError(f"threshold must be >= 0, got {tau}")
    dense = grid.sigma >= np.float32(tau)
    bf = OccupancyBitfield.from_dense(dense)
    return bf, int(dense.sum())


def support_bitfield(grid: RadianceFieldGrid, tau: float = 0.0):
    """Bitfield covering the interpolation support of voxels with density > tau.

    Marks every voxel whose 3x3x3 neighborhood contains density above tau, so
    any point the trilinear field maps to a nonzero value lies in a set voxel.
    Marching restricted to these bits has no false skips.
    """
    core = grid.sigma > np.float32(tau)
    dilated = ndimage.binary_dilation(core, structure=np.ones((3, 3, 3), bool))
    return OccupancyBitfield.from_dense(dilated)


# --- procedural test scenes -------------------------------------------------

@dataclass
class ScenePrimitive:
    """One constructive element: 'sphere', 'box', or 'slab' (axis-range fog)."""

    kind: str
    color: np.ndarray
    density: float
    center: np.ndarray | None = None   # sphere
    radius: float = 0.0                # sphere
    min_corner: np.ndarray | None = None  # box
    max_corner: np.ndarray | None = None  # box
    axis: int = 2                      # slab
    lo: float = 0.0                    # slab
    hi: float = 0.0                    # slab

    def __post_init__(self):
        if self.kind not in ("sphere", "box", "slab"):
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        self.color = np.asarray(self.color, dtype=np.float64).reshape(3)
        self.density = float(self.density)
        if self.density < 0:
            raise ValueError("primitive density must be >= 0")
        if self.kind == "sphere":
            self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
            if not self.radius > 0:
                raise ValueError("sphere radius must be > 0")
        elif self.kind == "box":
            self.min_corner = np.asarray(self.min_corner, np.float64).reshape(3)
            self.max_corner = np.asarray(self.max_corner, np.float64).reshape(3)


@dataclass
class SceneSpec:
    """Deterministic grid recipe: dims, placement, and primitive list."""

    dims: tuple
    origin: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))
    voxel_size: float = 1.0
    primitives: list = dc_field(default_factory=list)

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.voxel_size = float(self.voxel_size)


def make_procedural_grid(spec: SceneSpec) -> RadianceFieldGrid:
    """Evaluate primitives at voxel centers; overlaps keep the max density.

    A voxel takes the density of its strongest contributor and that
    contributor's color, independent of primitive order. Ties go to the
    earliest primitive in the list.
    """
    if any(d < 1 for d in spec.dims) or spec.voxel_size <= 0:
        raise ValueError("scene dims must be >= 1 and voxel_size > 0")
    grid = RadianceFieldGrid.empty(spec.dims, spec.origin, spec.voxel_size)
    cx, cy, cz = grid.voxel_centers()
    X, Y, Z = np.meshgrid(cx, cy, cz, indexing="ij")

    best = np.zeros(spec.dims, dtype=np.float64)
    for prim in spec.primitives:
        if prim.kind == "sphere":
            mask = ((X - prim.center[0]) ** 2 + (Y - prim.center[1]) ** 2
                    + (Z - prim.center[2]) ** 2) < prim.radius ** 2
        elif prim.kind == "box":
            mask = ((X >= prim.min_corner[0]) & (X <= prim.max_corner[0])
                    & (Y >= prim.min_corner[1]) & (Y <= prim.max_corner[1])
                    & (Z >= prim.min_corner[2]) & (Z <= prim.max_corner[2]))
        else:  # slab
            coord = (X, Y, Z)[prim.axis]
            mask = (coord >= prim.lo) & (coord <= prim.hi)
        take = mask & (prim.density > best)
        best[take] = prim.density
        grid.sigma[take] = prim.density
        grid.color[take] = prim.color.astype(np.float32)
    return grid
