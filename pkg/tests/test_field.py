import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxlens.field import (CropBox, OccupancyBitfield, RadianceFieldGrid,
                           ScenePrimitive, SceneSpec, apply_model_transform,
                           make_procedural_grid, rebuild_bitfield, sample_field,
                           support_bitfield)
from voxlens.xform import Trs, quat_from_axis_angle

from conftest import random_grid


def grid_with_values():
    grid = RadianceFieldGrid.empty((4, 4, 4), origin=(0, 0, 0), voxel_size=0.25)
    grid.sigma[1, 2, 3] = 2.0
    grid.color[1, 2, 3] = (1.0, 0.0, 0.0)
    return grid


def test_sample_at_voxel_center_is_exact():
    grid = grid_with_values()
    p = grid.origin + (np.array([1, 2, 3]) + 0.5) * grid.voxel_size
    s = sample_field(grid, p)
    assert s.density == pytest.approx(2.0, abs=1e-12)
    assert np.allclose(s.color, (1, 0, 0), atol=1e-12)


def test_sample_outside_grid_is_empty():
    grid = grid_with_values()
    s = sample_field(grid, (10.0, 10.0, 10.0))
    assert s.density == 0.0
    assert np.all(s.color == 0.0)


def test_sample_midpoint_between_centers():
    grid = RadianceFieldGrid.empty((4, 4, 4), origin=(0, 0, 0), voxel_size=0.25)
    grid.color[:] = (0.3, 0.3, 0.3)
    grid.sigma[1, 1, 1] = 0.0
    grid.sigma[2, 1, 1] = 4.0
    # midpoint of the two centers along x
    p = grid.origin + np.array([2.0, 1.5, 1.5]) * grid.voxel_size
    s = sample_field(grid, p)
    assert s.density == pytest.approx(2.0, rel=1e-12)


def test_sample_direction_is_ignored():
    grid = grid_with_values()
    p = grid.origin + (np.array([1, 2, 3]) + 0.5) * grid.voxel_size
    a = sample_field(grid, p, d=(0, 0, 1))
    b = sample_field(grid, p, d=(1, 0, 0))
    assert a.density == b.density and np.array_equal(a.color, b.color)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 9), st.floats(0.0, 1.0), st.floats(0.0, 1.0),
       st.floats(0.0, 1.0))
def test_sample_bounded_by_corner_values(seed, fx, fy, fz):
    rng = np.random.default_rng(seed)
    grid = random_grid(rng, 6, fill=0.8)
    # a point inside the interior lattice cell [1,2]^3
    base = grid.origin + (np.array([1, 1, 1]) + 0.5) * grid.voxel_size
    p = base + np.array([fx, fy, fz]) * grid.voxel_size
    s = sample_field(grid, p)
    corners = grid.sigma[1:3, 1:3, 1:3]
    assert corners.min() - 1e-6 <= s.density <= corners.max() + 1e-6


def test_rebuild_bitfield_thresholds():
    grid = RadianceFieldGrid.empty((8, 8, 8))
    bits, count = rebuild_bitfield(grid, 0.01)
    assert count == 0 and bits.popcount() == 0

    grid.sigma[:] = 5.0
    bits, count = rebuild_bitfield(grid, 0.01)
    assert count == 8 ** 3 and bits.popcount() == 8 ** 3


def test_rebuild_bitfield_counts_exactly():
    grid = RadianceFieldGrid.empty((8, 8, 8))
    for idx in [(0, 0, 0), (3, 4, 5), (7, 7, 7)]:
        grid.sigma[idx] = 1.0
    bits, count = rebuild_bitfield(grid, 0.5)
    assert count == 3 == bits.popcount()
    # direct scan oracle
    dense = bits.as_dense()
    assert np.array_equal(dense, grid.sigma >= 0.5)


def test_rebuild_bitfield_idempotent(rng):
    grid = random_grid(rng, 12)
    a, _ = rebuild_bitfield(grid, 0.01)
    b, _ = rebuild_bitfield(grid, 0.01)
    assert np.array_equal(a.bits, b.bits)


def test_no_false_skips_invariant(rng):
    grid = random_grid(rng, 10)
    tau = 0.3
    bits, _ = rebuild_bitfield(grid, tau)
    dense = bits.as_dense()
    assert np.all(dense[grid.sigma >= tau])


def test_rejects_negative_threshold(rng):
    with pytest.raises(ValueError):
        rebuild_bitfield(random_grid(rng, 4), -0.1)


def test_support_bitfield_covers_neighbors():
    grid = RadianceFieldGrid.empty((8, 8, 8))
    grid.sigma[4, 4, 4] = 1.0
    sup = support_bitfield(grid)
    dense = sup.as_dense()
    assert dense[3:6, 3:6, 3:6].all()
    assert dense.sum() == 27


def test_model_transform_identity():
    box = CropBox((0, 0, 0), (1, 1, 1))
    p = np.array([1.0, 2.0, 3.0])
    assert np.allclose(apply_model_transform(box, p), p, atol=1e-12)


def test_model_transform_scale_then_translate():
    box = CropBox((0, 0, 0), (1, 1, 1),
                  model_transform=Trs(translation=(1, 0, 0), scale=2.0))
    out = apply_model_transform(box, (1.0, 1.0, 1.0))
    assert np.allclose(out, (3.0, 2.0, 2.0), atol=1e-12)


def test_model_transform_rotation_90z():
    q = quat_from_axis_angle((0, 0, 1), np.pi / 2)
    box = CropBox((0, 0, 0), (1, 1, 1), model_transform=Trs(rotation_quat=q))
    out = apply_model_transform(box, (1.0, 0.0, 0.0))
    assert np.allclose(out, (0.0, 1.0, 0.0), atol=1e-6)


def test_cropbox_validates_corners():
    with pytest.raises(ValueError):
        CropBox((1, 0, 0), (0, 1, 1))


def test_bitfield_roundtrip_dense():
    rng = np.random.default_rng(3)
    dense = rng.random((5, 6, 7)) < 0.4
    bits = OccupancyBitfield.from_dense(dense)
    assert np.array_equal(bits.as_dense(), dense)
    assert bits.popcount() == int(dense.sum())


def test_procedural_empty_spec():
    grid = make_procedural_grid(SceneSpec(dims=(4, 4, 4)))
    assert grid.sigma.max() == 0.0


def test_procedural_sphere_matches_center_scan():
    spec = SceneSpec(dims=(8, 8, 8), voxel_size=0.25, primitives=[
        ScenePrimitive(kind="sphere", center=(1.0, 1.0, 1.0), radius=2.0,
                       color=(1, 1, 1), density=1.0)])
    grid = make_procedural_grid(spec)
    cx, cy, cz = grid.voxel_centers()
    X, Y, Z = np.meshgrid(cx, cy, cz, indexing="ij")
    inside = (X - 1) ** 2 + (Y - 1) ** 2 + (Z - 1) ** 2 < 4.0
    assert np.array_equal(grid.sigma > 0, inside)
    assert np.all(grid.sigma[inside] == 1.0)


def test_procedural_overlap_keeps_max_density():
    spec = SceneSpec(dims=(4, 4, 4), voxel_size=1.0, primitives=[
        ScenePrimitive(kind="box", min_corner=(0, 0, 0), max_corner=(4, 4, 4),
                       color=(1, 0, 0), density=1.0),
        ScenePrimitive(kind="box", min_corner=(0, 0, 0), max_corner=(4, 4, 2),
                       color=(0, 1, 0), density=3.0)])
    grid = make_procedural_grid(spec)
    assert np.all(grid.sigma[:, :, 0:2] == 3.0)
    assert np.all(grid.color[:, :, 0:2] == np.float32((0, 1, 0)))
    assert np.all(grid.sigma[:, :, 2:] == 1.0)
    # order independence
    spec.primitives.reverse()
    grid2 = make_procedural_grid(spec)
    assert np.array_equal(grid.sigma, grid2.sigma)
    assert np.array_equal(grid.color, grid2.color)


def test_procedural_determinism():
    spec = SceneSpec(dims=(6, 6, 6), voxel_size=0.5, primitives=[
        ScenePrimitive(kind="slab", axis=2, lo=0.5, hi=1.5,
                       color=(0.2, 0.4, 0.6), density=2.0)])
    a = make_procedural_grid(spec)
    b = make_procedural_grid(spec)
    assert np.array_equal(a.sigma, b.sigma) and np.array_equal(a.color, b.color)


def test_procedural_rejects_bad_dims():
    with pytest.raises(ValueError):
        make_procedural_grid(SceneSpec(dims=(0, 4, 4)))
    with pytest.raises(ValueError):
        make_procedural_grid(SceneSpec(dims=(4, 4, 4), voxel_size=-1.0))
