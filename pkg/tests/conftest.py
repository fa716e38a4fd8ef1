import math

import numpy as np
import pytest

from voxlens.field import RadianceFieldGrid, rebuild_bitfield, support_bitfield
from voxlens.lens import Camera, LensConfig


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_grid(rng, n, fill=0.15, sigma_scale=30.0, origin=(-0.5, -0.5, -0.5)):
    grid = RadianceFieldGrid.empty((n, n, n), origin=origin, voxel_size=1.0 / n)
    mask = rng.random((n, n, n)) < fill
    grid.sigma[mask] = (rng.random(int(mask.sum())) * sigma_scale).astype(np.float32)
    grid.color[:] = rng.random((n, n, n, 3)).astype(np.float32)
    return grid


def front_camera(dist=1.4, near=0.05, far=5.0):
    """Camera on -z looking +z toward a grid centered at the origin."""
    return Camera(position=(0.0, 0.0, -dist), near=near, far=far)


def small_lens(fov=40.0, ppd=0.8, ss=1.0, plane_w=3.0, far_len=5.0):
    return LensConfig(fov_deg=fov, ppd=ppd, plane_w=plane_w, far_len=far_len,
                      supersample_c=ss)


def slab_chord_setup(n=48):
    """Homogeneous density box crossed by a diagonal ray.

    The chord enters through the box's z face and leaves through its x
    face; the effective in-slab length between the two interpolation-ramp
    centers is returned with sigma chosen so sigma * length = ln 2.
    """
    from voxlens.lens import Ray

    vs = 1.0 / n
    grid = RadianceFieldGrid.empty((n, n, n), origin=(0, 0, 0), voxel_size=vs)
    grid.color[:] = (1.0, 0.0, 0.0)
    kx, kz0 = 32 * n // 48, 8 * n // 48
    d = np.array([0.41, 0.0, 0.77])
    d /= np.linalg.norm(d)
    ox, oy, oz = 0.11, (n // 2 + 0.5) * vs, -0.17
    t_in = (kz0 * vs - oz) / d[2]
    t_out = (kx * vs - ox) / d[0]
    ell = t_out - t_in
    sigma0 = math.log(2.0) / ell
    grid.sigma[0:kx, :, kz0:n] = np.float32(sigma0)
    ray = Ray(origin=(ox, oy, oz), dir=d, t_near=0.01, t_far=3.0)
    return grid, support_bitfield(grid), ray, ell, sigma0
