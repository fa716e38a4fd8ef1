"""Batch entry points: scene generation, single-frame render, edit-script
application, benchmark sweep, and the streaming server.

Exit codes: 0 success, 1 usage error, 2 data error. Machine outputs go
only to the paths given with -o/--depth/--stats; stdout carries short
human-readable summaries.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import bench, formats
from .edit import EditLog, load_mask
from .field import DEFAULT_TAU, make_procedural_grid, rebuild_bitfield
from .fusion import (OcclusionScene, TunnelConfig, composite_merge,
                     composite_tunnel, depth_occlude)
from .lens import LensConfig, lens_resolution
from .raster import load_obj, rasterize
from .raymarch import MarchConfig, render_frame

USAGE_EXIT = 1
DATA_EXIT = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(USAGE_EXIT)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="voxlens",
                description="Focus+context volumetric renderer and benchmark.",
                formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fmt = argparse.ArgumentDefaultsHelpFormatter

    ps = sub.add_parser("make-scene", help="generate a voxel grid", formatter_class=fmt)
    ps.add_argument("--spec", help="scene descriptor JSON")
    ps.add_argument("--preset", choices=["bench"],
                    help="built-in scene instead of --spec")
    ps.add_argument("--dims", type=int, default=128,
                    help="grid side length for --preset")
    ps.add_argument("--seed", type=int, default=0,
                    help="seed for randomized descriptors (reserved; presets "
                         "and specs are deterministic)")
    ps.add_argument("-o", "--output", required=True, help="output .mnlv path")

    pr = sub.add_parser("render", help="render one frame", formatter_class=fmt)
    pr.add_argument("--scene", required=True, help="grid .mnlv")
    pr.add_argument("--pose", required=True, help="camera pose JSON")
    pr.add_argument("--fov", type=float, default=30.0, help="lens fov (deg)")
    pr.add_argument("--ppd", type=float, default=20.0, help="pixels per degree")
    pr.add_argument("--mask", help="occupancy mask .mnlb")
    pr.add_argument("--mesh", help="context mesh .obj")
    pr.add_argument("--style", choices=["solid", "wireframe"], default="solid")
    pr.add_argument("--fuse", choices=["tunnel", "occlude", "merge"],
                    help="composite mode when --mesh is given (default occlude)")
    pr.add_argument("--alpha", type=float, default=1.0,
                    help="volume translucency for merge/tunnel")
    pr.add_argument("--feather", type=float, default=2.0,
                    help="tunnel feather band (deg)")
    pr.add_argument("--peripheral-fov", type=float,
                    help="raster context fov for tunnel (default: lens fov)")
    pr.add_argument("--plane-w", type=float, default=4.0, help="lens box width")
    pr.add_argument("--far-len", type=float, default=6.0, help="lens box depth")
    pr.add_argument("--near", type=float, help="override pose near")
    pr.add_argument("--far", type=float, help="override pose far")
    pr.add_argument("--step", type=float, help="march step (default voxel/2)")
    pr.add_argument("--supersample", type=float, default=4.0,
                    help="supersampling factor C")
    pr.add_argument("--align", help="fusion transform JSON")
    pr.add_argument("--tau", type=float, default=DEFAULT_TAU,
                    help="occupancy threshold")
    pr.add_argument("--threads", type=int, help="worker thread cap")
    pr.add_argument("-o", "--output", required=True, help="output PNG")
    pr.add_argument("--depth", help="also write raw f32 depth here")
    pr.add_argument("--stats", help="also write frame stats JSON here")

    pe = sub.add_parser("edit", help="apply an edit log to a scene",
                        formatter_class=fmt)
    pe.add_argument("--scene", required=True, help="grid .mnlv")
    pe.add_argument("--log", required=True, help="edit log .jsonl")
    pe.add_argument("--tau", type=float, default=DEFAULT_TAU)
    pe.add_argument("-o", "--output", required=True, help="output mask .mnlb")

    pb = sub.add_parser("bench", help="fov x ppd sweep over a trajectory",
                        formatter_class=fmt)
    pb.add_argument("--scene", required=True, help="grid .mnlv")
    pb.add_argument("--traj", required=True, help="trajectory JSON")
    pb.add_argument("--mask", help="occupancy mask .mnlb (adds masked rows)")
    pb.add_argument("--fovs", type=float, nargs="+",
                    default=list(bench.DEFAULT_FOVS))
    pb.add_argument("--ppds", type=float, nargs="+",
                    default=list(bench.DEFAULT_PPDS))
    pb.add_argument("--plane-w", type=float, default=4.0)
    pb.add_argument("--far-len", type=float, default=6.0)
    pb.add_argument("--near", type=float, default=0.05)
    pb.add_argument("--far", type=float, default=10.0)
    pb.add_argument("--supersample", type=float, default=4.0)
    pb.add_argument("--step", type=float, help="march step (default voxel/2)")
    pb.add_argument("--repeat", type=int, default=1)
    pb.add_argument("--stereo", action="store_true",
                    help="render both eyes per frame")
    pb.add_argument("--threads", type=int)
    pb.add_argument("-o", "--output", required=True, help="output CSV")

    pv = sub.add_parser("serve", help="run the streaming render server",
                        formatter_class=fmt)
    pv.add_argument("--port", type=int, default=7878)
    pv.add_argument("--host", default="127.0.0.1")
    pv.add_argument("--scene", help="grid .mnlv")
    pv.add_argument("--mesh", help="context mesh .obj")
    pv.add_argument("--mask", help="occupancy mask .mnlb")
    pv.add_argument("--fov", type=float, default=30.0)
    pv.add_argument("--ppd", type=float, default=4.0)
    pv.add_argument("--threads", type=int)
    pv.add_argument("--static", help="viewer asset directory")
    return p


def _cmd_make_scene(args) -> int:
    if bool(args.spec) == bool(args.preset):
        sys.stderr.write("make-scene: give exactly one of --spec or --preset\n")
        return USAGE_EXIT
    if args.preset == "bench":
        grid = bench.benchmark_scene(args.dims)
    else:
        grid = make_procedural_grid(formats.read_scene_spec(args.spec))
    formats.write_grid(args.output, grid)
    print(f"wrote grid {grid.dims} voxel_size={grid.voxel_size:g} "
          f"to {args.output}")
    return 0


def _cmd_render(args) -> int:
    grid = formats.read_grid(args.scene)
    bits = (load_mask(args.mask, grid, args.tau) if args.mask
            else rebuild_bitfield(grid, args.tau)[0])
    cam = formats.read_pose(args.pose, near=args.near, far=args.far)
    lens = LensConfig(fov_deg=args.fov, ppd=args.ppd, plane_w=args.plane_w,
                      far_len=args.far_len, supersample_c=args.supersample)
    cfg = MarchConfig(step=args.step)
    align = formats.read_fusion_transform(args.align).trs if args.align else None

    vol = render_frame(grid, bits, cam, lens, cfg=cfg, alignment=align,
                       threads=args.threads)
    frame, depth = vol.frame, vol.depth

    if args.mesh:
        mesh = load_obj(args.mesh)
        fuse = args.fuse or "occlude"
        if fuse == "tunnel":
            out_fov = args.peripheral_fov or args.fov
            res = max(-(-lens_resolution(out_fov, args.ppd) // lens.ss_axis), 1)
            ras = rasterize(mesh, cam, out_fov, res, style=args.style)
            frame = composite_tunnel(
                frame, ras, TunnelConfig(feather_deg=args.feather,
                                         merge_alpha=args.alpha),
                args.fov, out_fov)
        else:
            res = max(frame.shape[0], 1)
            ras = rasterize(mesh, cam, args.fov, res, style=args.style)
            if fuse == "merge":
                frame = composite_merge(frame, ras, args.alpha)
            else:
                scene = OcclusionScene(grid, bits, cam, lens, cfg,
                                       alignment=align, threads=args.threads)
                frame = depth_occlude(frame, depth, ras, scene=scene)
    elif args.fuse:
        sys.stderr.write("render: --fuse requires --mesh\n")
        return USAGE_EXIT

    formats.write_png(args.output, frame)
    if args.depth:
        formats.write_depth_f32(args.depth, depth)
    if args.stats:
        formats._atomic_write_text(args.stats,
                                   json.dumps(vol.stats.as_dict(), indent=1))
    s = vol.stats
    print(f"rendered {frame.shape[0]}x{frame.shape[1]} "
          f"samples={s.samples_total} active={s.rays_active}/{s.rays_total} "
          f"({s.wall_time_ms:.1f} ms) -> {args.output}")
    return 0


def _cmd_edit(args) -> int:
    grid = formats.read_grid(args.scene)
    log = EditLog.load(args.log)
    bits = log.replay(grid, tau=args.tau, check_hash=False)
    formats.write_mask(args.output, bits)
    print(f"applied {len(log.commands)} edits, {bits.popcount()} bits set "
          f"-> {args.output}")
    return 0


def _cmd_bench(args) -> int:
    grid = formats.read_grid(args.scene)
    traj = formats.read_trajectory(args.traj)
    mask_bits = load_mask(args.mask, grid, DEFAULT_TAU) if args.mask else None
    cfg = bench.SweepConfig(
        fov_list=tuple(args.fovs), ppd_list=tuple(args.ppds),
        march=MarchConfig(step=args.step), plane_w=args.plane_w,
        far_len=args.far_len, near=args.near, far=args.far,
        supersample_c=args.supersample, mask_bits=mask_bits,
        repeat=args.repeat, stereo=args.stereo, threads=args.threads)
    rows = bench.sweep(traj, grid, cfg)
    formats.write_bench_csv(args.output, rows)
    print(f"swept {len(rows)} configs over {len(traj)} poses -> {args.output}")
    for r in rows:
        print(f"  fov={r.fov_deg:g} ppd={r.ppd:g} res={r.resolution} "
              f"masked={int(r.masked)} mean_ft={r.mean_ft_ms:.1f}ms "
              f"mean_samples={r.mean_samples:.0f}")
    return 0


def _cmd_serve(args) -> int:
    from . import service

    state = service.load_session(scene=args.scene, mesh=args.mesh,
                                 mask=args.mask)
    state.lens = LensConfig(fov_deg=args.fov, ppd=args.ppd,
                            plane_w=state.lens.plane_w,
                            far_len=state.lens.far_len)
    state.threads = args.threads
    print(f"serving on ws://{args.host}:{args.port}/stream")
    service.serve(state, host=args.host, port=args.port,
                  static_dir=args.static)
    return 0


_COMMANDS = {
    "make-scene": _cmd_make_scene,
    "render": _cmd_render,
    "edit": _cmd_edit,
    "bench": _cmd_bench,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (formats.FormatError, FileNotFoundError, OSError) as exc:
        sys.stderr.write(f"voxlens {args.command}: {exc}\n")
        return DATA_EXIT
    except (ValueError, RuntimeError) as exc:
        sys.stderr.write(f"voxlens {args.command}: {exc}\n")
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
