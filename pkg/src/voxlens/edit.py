"""Sphere-brush edits on the occupancy bitfield: reveal/erase regions, with
optional permanent density erasure and a replayable edit log.

Membership is tested at voxel centers, so the brush works at grid
resolution. Soft (bit-only) edits are reversible through reveal; hard
erases zero the density itself and survive any later rebuild.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field

import numpy as np

from .field import (DEFAULT_TAU, OccupancyBitfield, RadianceFieldGrid,
                    rebuild_bitfield)
from . import formats

MODES = ("reveal", "erase")


@dataclass
class EditCommand:
    mode: str
    center: np.ndarray
    radius: float
    hard: bool = False
    t_ms: float = 0.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
        self.radius = float(self.radius)
        if not self.radius > 0:
            raise ValueError(f"radius must be > 0, got {self.radius}")
        self.hard = bool(self.hard)
        self.t_ms = float(self.t_ms)

    def to_dict(self) -> dict:
        return {"t_ms": self.t_ms, "mode": self.mode,
                "center": [float(c) for c in self.center],
                "radius": self.radius, "hard": self.hard}

    @classmethod
    def from_dict(cls, d: dict):
        return cls(mode=d["mode"], center=d["center"], radius=d["radius"],
                   hard=bool(d.get("hard", False)), t_ms=float(d.get("t_ms", 0.0)))


def _sphere_mask(grid: RadianceFieldGrid, center, radius):
    """Boolean mask of voxels whose centers lie strictly inside the sphere."""
    cx, cy, cz = grid.voxel_centers()
    dx2 = (cx - center[0]) ** 2
    dy2 = (cy - center[1]) ** 2
    dz2 = (cz - center[2]) ** 2
    return (dx2[:, None, None] + dy2[None, :, None]
            + dz2[None, None, :]) < radius ** 2


def apply_edit(grid: RadianceFieldGrid, bits: OccupancyBitfield,
               cmd: EditCommand, tau: float = DEFAULT_TAU) -> OccupancyBitfield:
    """Apply one brush command; returns the updated bitfield.

    Erase clears bits inside the sphere (and zeroes densities when
    cmd.hard); reveal restores bits to the density test. Voxels outside
    the sphere are untouched.
    """
    if bits.dims != grid.dims:
        raise ValueError(f"bitfield dims {bits.dims} != grid dims {grid.dims}")
    mask = _sphere_mask(grid, cmd.center, cmd.radius)
    dense = bits.as_dense()
    if cmd.mode == "erase":
        dense[mask] = False
        if cmd.hard:
            grid.sigma[mask] = 0.0
    else:
        dense[mask] = grid.sigma[mask] >= np.float32(tau)
    return OccupancyBitfield.from_dense(dense)


def reveal_all(grid: RadianceFieldGrid, tau: float = DEFAULT_TAU) -> OccupancyBitfield:
    """Rebuild from densities, undoing every soft erase."""
    bits, _ = rebuild_bitfield(grid, tau)
    return bits


def save_mask(bits: OccupancyBitfield, path):
    formats.write_mask(path, bits)


def load_mask(path, grid: RadianceFieldGrid,
              tau: float = DEFAULT_TAU) -> OccupancyBitfield:
    """Load a mask and AND it with a fresh rebuild of the grid.

    The AND keeps density-absent voxels out of the render set even if the
    stored mask marks them, so stale masks can never re-enable skipped
    regions that no longer have content.
    """
    stored = formats.read_mask(path)
    if stored.dims != grid.dims:
        raise ValueError(
            f"mask dims {stored.dims} do not match grid dims {grid.dims}")
    fresh, _ = rebuild_bitfield(grid, tau)
    return OccupancyBitfield(grid.dims, stored.bits & fresh.bits)


@dataclass
class EditLog:
    """Ordered brush commands plus the hash of the grid they started from."""

    commands: list = dc_field(default_factory=list)
    grid_hash: str | None = None

    @classmethod
    def for_grid(cls, grid: RadianceFieldGrid):
        return cls(commands=[], grid_hash=grid.content_hash())

    def append(self, cmd: EditCommand):
        self.commands.append(cmd)

    def replay(self, grid: RadianceFieldGrid, tau: float = DEFAULT_TAU,
               check_hash: bool = True) -> OccupancyBitfield:
        """Re-apply the log on a fresh rebuild of the grid."""
        if check_hash and self.grid_hash is not None:
            h = grid.content_hash()
            if h != self.grid_hash:
                raise ValueError(
                    f"grid hash {h[:12]}... does not match log origin "
                    f"{self.grid_hash[:12]}...")
        bits, _ = rebuild_bitfield(grid, tau)
        for cmd in self.commands:
            bits = apply_edit(grid, bits, cmd, tau)
        return bits

    def save(self, path):
        formats.write_edit_log(path, self)

    @classmethod
    def load(cls, path):
        return formats.read_edit_log(path)
