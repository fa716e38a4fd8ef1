import math

import numpy as np
import pytest

from voxlens.field import CropBox
from voxlens.lens import (Camera, LensConfig, Ray, generate_rays, lens_box,
                          lens_resolution, pixel_dirs_cam)
from voxlens.xform import Trs, quat_from_axis_angle


def test_resolution_rule_reference_points():
    assert lens_resolution(30, 20) == 1200
    assert lens_resolution(40, 15) == 1200
    assert lens_resolution(0, 25) == 0


def test_resolution_rejects_negative():
    with pytest.raises(ValueError):
        lens_resolution(-1, 20)


def test_lens_config_validation():
    with pytest.raises(ValueError):
        LensConfig(fov_deg=200)
    with pytest.raises(ValueError):
        LensConfig(ppd=0)
    with pytest.raises(ValueError):
        LensConfig(plane_w=0)
    with pytest.raises(ValueError):
        LensConfig(supersample_c=0.5)
    with pytest.raises(ValueError):
        LensConfig(far_len=0.01).validate_against(Camera((0, 0, 0), near=0.1))


def test_camera_validation():
    with pytest.raises(ValueError):
        Camera((0, 0, 0), near=0.0)
    with pytest.raises(ValueError):
        Camera((0, 0, 0), near=1.0, far=0.5)
    with pytest.raises(ValueError):
        Camera((0, 0, 0), orientation=(1, 1, 1, 1))


def test_lens_box_geometry():
    cam = Camera(position=(0, 0, 0), near=0.1)
    lens = LensConfig(plane_w=1.0, far_len=2.0)
    box = lens_box(cam, lens)
    assert np.allclose(box.min_corner, (-0.5, -0.5, 0.1))
    assert np.allclose(box.max_corner, (0.5, 0.5, 2.0))
    # depth of the box volume equals far_len - near exactly
    assert box.max_corner[2] - box.min_corner[2] == lens.far_len - cam.near


def test_lens_box_follows_camera_frame():
    # -90 deg yaw about +y sends the view axis to world -x
    q = quat_from_axis_angle((0, 1, 0), -math.pi / 2)
    cam = Camera(position=(1, 2, 3), orientation=q, near=0.1)
    box = lens_box(cam, LensConfig(plane_w=1.0, far_len=2.0))
    axis_world = box.model_transform.apply((0, 0, 1)) - cam.position
    assert np.allclose(axis_world, (-1, 0, 0), atol=1e-9)
    assert np.allclose(axis_world, cam.forward(), atol=1e-9)


def test_center_ray_matches_forward():
    cam = Camera(position=(0, 0, 0), near=0.05, far=10)
    lens = LensConfig(fov_deg=30, ppd=1.0, plane_w=5.0, far_len=8.0,
                      supersample_c=1)
    rays = generate_rays(cam, lens)
    res = rays.res
    # off-axis by half a pixel only
    k = (res // 2) * res + res // 2
    assert np.dot(rays.dirs[k], cam.forward()) > math.cos(math.radians(0.5))


def test_corner_pixel_angle_closed_form():
    # half-pixel offset shrinks with resolution; 4800 px gives < 1e-4 rad
    res = lens_resolution(30, 80)
    dirs = pixel_dirs_cam(30, res)
    corner = dirs[0, 0]
    ang = math.acos(corner[2])
    expected = math.atan(math.sqrt(2.0) * math.tan(math.radians(15)))
    assert abs(ang - expected) < 1e-4


def test_disjoint_boxes_deactivate_all_rays():
    cam = Camera(position=(0, 0, 0), near=0.05, far=100)
    lens = LensConfig(fov_deg=20, ppd=1.0, plane_w=2.0, far_len=3.0,
                      supersample_c=1)
    scene = CropBox((-1, -1, -1), (1, 1, 1),
                    model_transform=Trs(translation=(50, 0, 0)))
    rays = generate_rays(cam, lens, scene_box=scene)
    assert not rays.active.any()


def test_degenerate_plane_width_deactivates():
    cam = Camera(position=(0, 0, 0), near=0.05, far=10)
    lens = LensConfig(fov_deg=20, ppd=1.0, plane_w=1e-9, far_len=3.0,
                      supersample_c=1)
    rays = generate_rays(cam, lens)
    assert not rays.active.any()


def test_t_range_within_near_far():
    cam = Camera(position=(0.2, -0.1, 0), near=0.3, far=4.0)
    lens = LensConfig(fov_deg=50, ppd=0.8, plane_w=2.0, far_len=3.5,
                      supersample_c=1)
    scene = CropBox((-1, -1, -1), (1, 1, 1))
    rays = generate_rays(cam, lens, scene_box=scene)
    act = rays.active
    assert np.all(rays.t_near[act] >= cam.near - 1e-12)
    assert np.all(rays.t_far[act] <= cam.far + 1e-12)
    assert np.all(rays.t_near[act] <= rays.t_far[act])


def test_ray_dirs_unit_norm():
    cam = Camera(position=(0, 0, 0), near=0.05, far=10)
    lens = LensConfig(fov_deg=60, ppd=0.5, plane_w=4.0, far_len=6.0,
                      supersample_c=1)
    rays = generate_rays(cam, lens)
    norms = np.linalg.norm(rays.dirs, axis=1)
    assert np.allclose(norms, 1.0, atol=1e-6)


def test_doubling_ppd_quadruples_pixels():
    n1 = lens_resolution(25, 10)
    n2 = lens_resolution(25, 20)
    assert n2 * n2 == 4 * n1 * n1


def test_active_count_bounded():
    cam = Camera(position=(0, 0, -2), near=0.05, far=10)
    lens = LensConfig(fov_deg=40, ppd=0.5, plane_w=1.0, far_len=4.0,
                      supersample_c=1)
    scene = CropBox((-0.2, -0.2, -0.2), (0.2, 0.2, 0.2))
    rays = generate_rays(cam, lens, scene_box=scene)
    assert 0 < rays.active.sum() <= rays.res ** 2


def test_ray_type_validation():
    with pytest.raises(ValueError):
        Ray((0, 0, 0), (0, 0, 2.0), 0.0, 1.0)
    r = Ray((0, 0, 0), (0, 0, 1.0), 2.0, 1.0)
    assert not r.active
