import json

import numpy as np
import pytest

from voxlens import formats
from voxlens.bench import Trajectory, TrajectorySample, benchmark_scene_spec
from voxlens.cli import main
from voxlens.edit import EditCommand, EditLog
from voxlens.field import make_procedural_grid, rebuild_bitfield
from voxlens.lens import Camera, LensConfig
from voxlens.raymarch import MarchConfig, render_frame


@pytest.fixture
def scene_path(tmp_path):
    grid = make_procedural_grid(benchmark_scene_spec(24))
    p = tmp_path / "scene.mnlv"
    formats.write_grid(p, grid)
    return p


@pytest.fixture
def pose_path(tmp_path):
    cam = Camera(position=(1.0, 1.0, 0.15), near=0.05, far=10.0)
    p = tmp_path / "pose.json"
    formats.write_pose(p, cam)
    return p


def test_make_scene_preset_and_spec(tmp_path):
    out = tmp_path / "g.mnlv"
    assert main(["make-scene", "--preset", "bench", "--dims", "16",
                 "-o", str(out)]) == 0
    grid = formats.read_grid(out)
    assert grid.dims == (16, 16, 16)

    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({
        "dims": [8, 8, 8], "voxel_size": 0.25,
        "primitives": [{"kind": "sphere", "center": [1, 1, 1], "radius": 0.5,
                        "color": [1, 0, 0], "density": 2.0}]}))
    out2 = tmp_path / "g2.mnlv"
    assert main(["make-scene", "--spec", str(spec), "-o", str(out2)]) == 0
    assert formats.read_grid(out2).sigma.max() == 2.0


def test_make_scene_requires_exactly_one_source(tmp_path):
    out = tmp_path / "g.mnlv"
    assert main(["make-scene", "-o", str(out)]) == 1
    assert main(["make-scene", "--preset", "bench", "--spec", "x.json",
                 "-o", str(out)]) == 1


def test_render_matches_library(tmp_path, scene_path, pose_path):
    out = tmp_path / "out.png"
    depth = tmp_path / "out.f32"
    stats = tmp_path / "stats.json"
    rc = main(["render", "--scene", str(scene_path), "--pose", str(pose_path),
               "--fov", "20", "--ppd", "1.0", "-o", str(out),
               "--depth", str(depth), "--stats", str(stats)])
    assert rc == 0
    assert out.exists() and depth.exists()
    sidecar = json.loads((tmp_path / "out.f32.json").read_text())
    assert sidecar["near"] == 0.05

    # golden equivalence with the library call
    grid = formats.read_grid(scene_path)
    bits, _ = rebuild_bitfield(grid)
    cam = formats.read_pose(pose_path)
    lens = LensConfig(fov_deg=20, ppd=1.0, plane_w=4.0, far_len=6.0)
    ref = render_frame(grid, bits, cam, lens, cfg=MarchConfig())
    assert out.read_bytes() == formats.png_bytes(ref.frame)
    st = json.loads(stats.read_text())
    assert st["samples_total"] == ref.stats.samples_total


def test_render_deterministic_outputs(tmp_path, scene_path, pose_path):
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    args = ["render", "--scene", str(scene_path), "--pose", str(pose_path),
            "--fov", "15", "--ppd", "1.0"]
    assert main(args + ["-o", str(a)]) == 0
    assert main(args + ["-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_render_empty_scene_background(tmp_path, pose_path):
    empty = tmp_path / "empty.mnlv"
    from voxlens.field import RadianceFieldGrid
    formats.write_grid(empty, RadianceFieldGrid.empty((8, 8, 8),
                                                      voxel_size=0.25))
    out = tmp_path / "out.png"
    stats = tmp_path / "s.json"
    rc = main(["render", "--scene", str(empty), "--pose", str(pose_path),
               "--fov", "20", "--ppd", "1.0", "-o", str(out),
               "--stats", str(stats)])
    assert rc == 0
    assert json.loads(stats.read_text())["samples_total"] == 0


def test_render_fuse_modes(tmp_path, scene_path, pose_path):
    obj = tmp_path / "ctx.obj"
    obj.write_text("v -4 -3 1.9\nv 6 -3 1.9\nv 6 5 1.9\nv -4 5 1.9\n"
                   "f 1 2 3 4\n")
    for mode in ("occlude", "merge", "tunnel"):
        out = tmp_path / f"{mode}.png"
        rc = main(["render", "--scene", str(scene_path), "--pose",
                   str(pose_path), "--fov", "20", "--ppd", "1.0",
                   "--mesh", str(obj), "--fuse", mode, "--alpha", "0.7",
                   "-o", str(out)])
        assert rc == 0 and out.exists()


def test_edit_subcommand_deterministic(tmp_path, scene_path):
    log = EditLog([EditCommand(mode="erase", center=(1.0, 1.0, 1.2),
                               radius=0.4, t_ms=1.0)])
    lp = tmp_path / "edits.jsonl"
    formats.write_edit_log(lp, log)
    m1, m2 = tmp_path / "m1.mnlb", tmp_path / "m2.mnlb"
    assert main(["edit", "--scene", str(scene_path), "--log", str(lp),
                 "-o", str(m1)]) == 0
    assert main(["edit", "--scene", str(scene_path), "--log", str(lp),
                 "-o", str(m2)]) == 0
    assert m1.read_bytes() == m2.read_bytes()


def test_bench_subcommand_csv(tmp_path, scene_path):
    traj = Trajectory([TrajectorySample(1.0, (1.0, 1.0, 0.15), (0, 0, 0, 1))])
    tp = tmp_path / "traj.json"
    formats.write_trajectory(tp, traj)
    out = tmp_path / "out.csv"
    rc = main(["bench", "--scene", str(scene_path), "--traj", str(tp),
               "--fovs", "10", "20", "--ppds", "1",
               "--supersample", "1", "-o", str(out)])
    assert rc == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == formats.CSV_HEADER
    assert len(lines) == 3


def test_bench_sample_columns_deterministic(tmp_path, scene_path):
    traj = Trajectory([TrajectorySample(1.0, (1.0, 1.0, 0.15), (0, 0, 0, 1))])
    tp = tmp_path / "traj.json"
    formats.write_trajectory(tp, traj)
    outs = []
    for name in ("c1.csv", "c2.csv"):
        out = tmp_path / name
        assert main(["bench", "--scene", str(scene_path), "--traj", str(tp),
                     "--fovs", "15", "--ppds", "1", "--supersample", "1",
                     "-o", str(out)]) == 0
        rows = [line.split(",") for line in
                out.read_text().strip().splitlines()[1:]]
        outs.append([(r[0], r[1], r[2], r[3], r[6], r[7]) for r in rows])
    assert outs[0] == outs[1]


def test_usage_errors_exit_1():
    # argparse paths exit via SystemExit; the parser maps usage errors to 1
    with pytest.raises(SystemExit) as exc:
        main(["render", "--no-such-flag"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["definitely-not-a-command"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["render"])  # missing required arguments
    assert exc.value.code == 1


def test_unknown_flag_exits_1():
    with pytest.raises(SystemExit) as exc:
        main(["bench", "--warp-speed", "9"])
    assert exc.value.code == 1


def test_data_errors_exit_2(tmp_path, pose_path):
    missing = tmp_path / "missing.mnlv"
    out = tmp_path / "out.png"
    rc = main(["render", "--scene", str(missing), "--pose", str(pose_path),
               "-o", str(out)])
    assert rc == 2

    junk = tmp_path / "junk.mnlv"
    junk.write_bytes(b"NOPE")
    rc = main(["render", "--scene", str(junk), "--pose", str(pose_path),
               "-o", str(out)])
    assert rc == 2


def test_help_lists_flags_with_defaults(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["render", "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for flag in ("--scene", "--pose", "--fov", "--ppd", "--mask", "--mesh",
                 "--style", "--fuse", "--alpha", "--feather", "--plane-w",
                 "--far-len", "--step", "--supersample", "--threads"):
        assert flag in text
    assert "default" in text
