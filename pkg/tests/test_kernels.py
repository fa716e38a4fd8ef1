"""Cross-checks between the compiled kernel and the pure-Python fallback."""

import math

import numpy as np
import pytest

import voxlens.kernels as kernels
from voxlens.field import rebuild_bitfield, support_bitfield
from voxlens.kernels import _march_py

from conftest import random_grid

try:
    from voxlens.kernels import _march
    HAVE_EXT = True
except ImportError:
    HAVE_EXT = False


def _args(grid, bits, res=20, ss=2, fov=40.0):
    return dict(
        sigma_arr=grid.sigma, color_arr=grid.color,
        occ_arr=bits.as_dense().astype(np.uint8),
        grid_origin=grid.origin, voxel_size=grid.voxel_size,
        cam_pos_arr=np.array([0.0, 0.0, -1.4]), cam_rot_arr=np.eye(3),
        res=res, ss=ss, tan_half_fov=math.tan(math.radians(fov) / 2),
        near=0.05, far=5.0, dt=grid.voxel_size / 2, term_eps=1e-4,
        lens_half_w=1.5, lens_z0=0.05, lens_z1=5.0, threads=2)


def test_backend_name_is_valid():
    assert kernels.backend_name() in ("cython", "python")


@pytest.mark.skipif(not HAVE_EXT, reason="compiled kernel not built")
def test_backends_agree(rng):
    grid = random_grid(rng, 14)
    bits = support_bitfield(grid)
    kw = _args(grid, bits)
    rgba_c, depth_c, ns_c, na_c, sp_c = _march.march_frame(**kw)
    rgba_p, depth_p, ns_p, na_p, sp_p = _march_py.march_frame(**kw)
    assert np.abs(rgba_c - rgba_p).max() < 1e-5
    assert np.abs(depth_c - depth_p).max() < 1e-4
    assert np.array_equal(ns_c, ns_p)
    assert np.array_equal(na_c, na_p)
    assert np.array_equal(sp_c, sp_p)


@pytest.mark.skipif(not HAVE_EXT, reason="compiled kernel not built")
def test_backends_agree_with_alignment_and_scene_box(rng):
    from voxlens.xform import quat_from_axis_angle, quat_to_matrix

    grid = random_grid(rng, 12, fill=0.3)
    bits, _ = rebuild_bitfield(grid, 0.01)
    q = quat_from_axis_angle((0, 1, 0), 0.3)
    rot = quat_to_matrix(q)
    kw = _args(grid, bits, res=16)
    kw.update(
        scene_rot_inv=np.eye(3), scene_trans=np.zeros(3), scene_scale=1.0,
        scene_min=np.array([-0.4, -0.4, -0.4]), scene_max=np.array([0.4, 0.4, 0.4]),
        align_rot_inv=rot.T.copy(), align_trans=np.array([0.05, 0.0, -0.02]),
        align_inv_scale=1.0 / 1.2)
    outs_c = _march.march_frame(**kw)
    outs_p = _march_py.march_frame(**kw)
    assert np.abs(outs_c[0] - outs_p[0]).max() < 1e-5
    assert np.array_equal(outs_c[2], outs_p[2])


@pytest.mark.skipif(not HAVE_EXT, reason="compiled kernel not built")
def test_threads_do_not_change_output(rng):
    grid = random_grid(rng, 16)
    bits, _ = rebuild_bitfield(grid, 0.01)
    kw = _args(grid, bits, res=24)
    kw["threads"] = 1
    a = _march.march_frame(**kw)
    kw["threads"] = 2
    b = _march.march_frame(**kw)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


@pytest.mark.skipif(not HAVE_EXT, reason="compiled kernel not built")
def test_tmax_map_clips_marching(rng):
    grid = random_grid(rng, 12, fill=0.6)
    bits, _ = rebuild_bitfield(grid, 0.01)
    kw = _args(grid, bits, res=12, ss=1)
    full = _march.march_frame(**kw)
    kw["tmax_map"] = np.full((12, 12), 0.9, np.float32)  # before the grid
    clipped = _march.march_frame(**kw)
    assert clipped[2].sum() == 0  # no samples before t=0.9
    assert full[2].sum() > 0
