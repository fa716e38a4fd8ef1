import numpy as np
import pytest

from voxlens.bench import (SweepConfig, Trajectory, TrajectorySample,
                           benchmark_scene, benchmark_trajectory, replay,
                           sweep, targets_only_mask)
from voxlens.field import RadianceFieldGrid, rebuild_bitfield
from voxlens.lens import lens_resolution
from voxlens.raymarch import MarchConfig

from conftest import small_lens


def one_pose(pos=(1.0, 1.0, 0.15)):
    return Trajectory([TrajectorySample(1.0, pos, (0, 0, 0, 1))])


def test_trajectory_requires_increasing_time():
    with pytest.raises(ValueError):
        Trajectory([TrajectorySample(5.0, (0, 0, 0), (0, 0, 0, 1)),
                    TrajectorySample(5.0, (0, 0, 0), (0, 0, 0, 1))])


def test_replay_empty_scene_zero_samples():
    grid = RadianceFieldGrid.empty((8, 8, 8), origin=(0, 0, 0), voxel_size=0.25)
    bits, _ = rebuild_bitfield(grid)
    stats, summary = replay(one_pose((1, 1, -1)), grid, bits,
                            small_lens(), MarchConfig())
    assert len(stats) == 1
    assert stats[0].samples_total == 0
    assert summary["mean_samples"] == 0


def test_replay_determinism_small_bench_scene():
    grid = benchmark_scene(32)
    bits, _ = rebuild_bitfield(grid)
    traj = benchmark_trajectory(2)
    lens = small_lens(fov=30, ppd=1.0, plane_w=4.0, far_len=6.0)
    a, _ = replay(traj, grid, bits, lens, MarchConfig(), far=10.0)
    b, _ = replay(traj, grid, bits, lens, MarchConfig(), far=10.0)
    assert [s.samples_total for s in a] == [s.samples_total for s in b]
    assert [s.rays_active for s in a] == [s.rays_active for s in b]


def test_replay_rejects_empty_trajectory():
    grid = benchmark_scene(16)
    bits, _ = rebuild_bitfield(grid)
    with pytest.raises(ValueError):
        replay(Trajectory([]), grid, bits, small_lens(), MarchConfig())


def test_replay_stereo_doubles_rays():
    grid = benchmark_scene(24)
    bits, _ = rebuild_bitfield(grid)
    lens = small_lens(fov=20, ppd=1.0, plane_w=4.0, far_len=6.0)
    mono, _ = replay(one_pose(), grid, bits, lens, MarchConfig(), far=10.0)
    stereo, _ = replay(one_pose(), grid, bits, lens, MarchConfig(), far=10.0,
                       stereo=True)
    assert stereo[0].rays_total == 2 * mono[0].rays_total


def test_sweep_row_shape_and_order():
    grid = benchmark_scene(24)
    cfg = SweepConfig(fov_list=(10.0, 20.0), ppd_list=(1.0, 2.0),
                      supersample_c=1.0, march=MarchConfig())
    rows = sweep(one_pose(), grid, cfg)
    assert len(rows) == 4
    assert [(r.ppd, r.fov_deg) for r in rows] == [(1, 10), (1, 20), (2, 10), (2, 20)]
    for r in rows:
        assert r.resolution == lens_resolution(r.fov_deg, r.ppd)
        assert not r.masked


def test_sweep_with_mask_adds_masked_rows():
    grid = benchmark_scene(24)
    mask = targets_only_mask(grid)
    cfg = SweepConfig(fov_list=(20.0, 40.0), ppd_list=(1.0,),
                      supersample_c=1.0, mask_bits=mask)
    rows = sweep(one_pose(), grid, cfg)
    assert len(rows) == 4
    unmasked = {(r.fov_deg): r for r in rows if not r.masked}
    masked = {(r.fov_deg): r for r in rows if r.masked}
    for fov in (20.0, 40.0):
        assert masked[fov].mean_samples < unmasked[fov].mean_samples


def test_sweep_erase_everything_gives_zero_masked_samples():
    from voxlens.field import OccupancyBitfield
    grid = benchmark_scene(24)
    empty = OccupancyBitfield.from_dense(np.zeros(grid.dims, bool))
    cfg = SweepConfig(fov_list=(20.0,), ppd_list=(1.0,), supersample_c=1.0,
                      mask_bits=empty)
    rows = sweep(one_pose(), grid, cfg)
    masked = [r for r in rows if r.masked]
    assert masked[0].mean_samples == 0


def test_sweep_monotone_in_fov_small_scene():
    grid = benchmark_scene(32)
    cfg = SweepConfig(fov_list=(10.0, 20.0, 30.0, 40.0, 50.0, 60.0),
                      ppd_list=(1.0,), supersample_c=1.0)
    rows = sweep(one_pose(), grid, cfg)
    samples = [r.mean_samples for r in rows]
    assert all(b >= a for a, b in zip(samples, samples[1:]))


def test_sweep_mask_shape_mismatch():
    from voxlens.field import OccupancyBitfield
    grid = benchmark_scene(24)
    bad = OccupancyBitfield.full((8, 8, 8))
    with pytest.raises(ValueError):
        sweep(one_pose(), grid, SweepConfig(mask_bits=bad))


def test_benchmark_scene_masked_strictly_below_everywhere():
    grid = benchmark_scene(48)
    mask = targets_only_mask(grid)
    cfg = SweepConfig(fov_list=(10.0, 30.0, 60.0), ppd_list=(2.0,),
                      supersample_c=1.0, mask_bits=mask)
    rows = sweep(benchmark_trajectory(1), grid, cfg)
    um = [r for r in rows if not r.masked]
    mk = [r for r in rows if r.masked]
    for u, m in zip(um, mk):
        assert m.mean_samples < u.mean_samples
    # masked samples grow with fov too (targets at staggered offsets)
    assert mk[0].mean_samples < mk[1].mean_samples < mk[2].mean_samples
