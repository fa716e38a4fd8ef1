"""Pure-Python/NumPy marching kernel; the semantics reference for the backends.

Marching contract (shared with the compiled kernel):
  * one perspective sub-ray per supersample of each output pixel;
  * each ray's interval is [near, far] clipped to the camera-frame lens box,
    the optional scene crop box, and the grid AABB;
  * sample positions are globally anchored at the clipped grid entry:
    t_k = anchor + (k + 0.5) * dt, so renders with different occupancy
    bitfields sample identical positions inside shared spans;
  * traversal visits only occupied voxel runs (Amanatides-Woo DDA, adjacent
    occupied voxels merged into one span before sampling);
  * per sample: alpha = 1 - exp(-sigma * dt_field), premultiplied
    accumulation, early termination once transmittance < term_eps;
  * depth = sum(T_i * alpha_i * t_i) + T_final * far.
"""

from __future__ import annotations

import math

import numpy as np


def _trilinear(sigma, color, gmin, inv_vs, dims, pts):
    """Clamped-node trilinear sampling of sigma and color at field points."""
    q = (pts - gmin) * inv_vs - 0.5
    i0 = np.floor(q).astype(np.int64)
    f = q - i0
    d = np.asarray(dims)
    ia = np.clip(i0, 0, d - 1)
    ib = np.clip(i0 + 1, 0, d - 1)
    s_acc = np.zeros(q.shape[0], dtype=np.float64)
    c_acc = np.zeros((q.shape[0], 3), dtype=np.float64)
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
                s_acc += w * sigma[ix, iy, iz]
                c_acc += w[:, None] * color[ix, iy, iz]
    return s_acc, c_acc


def dda_runs(occ, gmin, vs, o_f, d_f, tf0, tf1):
    """Occupied-voxel runs of a field-space ray segment, as (t0, t1) pairs.

    Returns (runs, gaps) where runs are merged maximal occupied spans in
    field-space t and gaps counts the maximal empty runs traversed.
    """
    dims = occ.shape
    if tf0 >= tf1:
        return [], 0
    p = o_f + tf0 * d_f
    idx = [0, 0, 0]
    step = [0, 0, 0]
    tmax = [math.inf] * 3
    tdelta = [math.inf] * 3
    for a in range(3):
        idx[a] = int(np.clip(math.floor((p[a] - gmin[a]) / vs), 0, dims[a] - 1))
        if d_f[a] > 0:
            step[a] = 1
            nxt = gmin[a] + (idx[a] + 1) * vs
            tmax[a] = tf0 + (nxt - p[a]) / d_f[a]
            tdelta[a] = vs / d_f[a]
        elif d_f[a] < 0:
            step[a] = -1
            nxt = gmin[a] + idx[a] * vs
            tmax[a] = tf0 + (nxt - p[a]) / d_f[a]
            tdelta[a] = vs / -d_f[a]

    runs = []
    gaps = 0
    t_cur = tf0
    run_start = None
    in_gap = False
    while t_cur < tf1:
        t_exit = min(tmax[0], tmax[1], tmax[2], tf1)
        if occ[idx[0], idx[1], idx[2]]:
            if run_start is None:
                run_start = t_cur
            in_gap = False
        else:
            if run_start is not None:
                runs.append((run_start, t_cur))
                run_start = None
            if not in_gap:
                gaps += 1
                in_gap = True
        if t_exit >= tf1:
            t_cur = tf1
            break
        axis = 0
        if tmax[1] < tmax[axis]:
            axis = 1
        if tmax[2] < tmax[axis]:
            axis = 2
        t_cur = tmax[axis]
        tmax[axis] += tdelta[axis]
        idx[axis] += step[axis]
        if idx[axis] < 0 or idx[axis] >= dims[axis]:
            break
    if run_start is not None:
        runs.append((run_start, t_cur))
    return runs, gaps


def integrate_segments(sigma, color, gmin, vs, dims, o_f, d_f, inv_scale,
                       anchor, runs_world, dt, term_eps, far):
    """Composite the anchored samples of the given world-t spans.

    Returns (rgb premult, alpha, depth, n_samples, terminated_early).
    """
    inv_vs = 1.0 / vs
    dt_field = dt * inv_scale
    t_list = []
    for (s0, s1) in runs_world:
        k0 = math.ceil((s0 - anchor) / dt - 0.5)
        if k0 < 0:
            k0 = 0
        t_k = anchor + (k0 + 0.5) * dt
        ks = []
        while t_k < s1:
            ks.append(t_k)
            k0 += 1
            t_k = anchor + (k0 + 0.5) * dt
        if ks:
            t_list.append(np.asarray(ks))
    if not t_list:
        return np.zeros(3), 0.0, far, 0, False

    ts = np.concatenate(t_list)
    pts = o_f[None, :] + (ts * inv_scale)[:, None] * d_f[None, :]
    sig, col = _trilinear(sigma, color, gmin, inv_vs, dims, pts)

    od = sig * dt_field
    cum = np.cumsum(od)
    t_after = np.exp(-cum)
    term = np.nonzero(t_after < term_eps)[0]
    if term.size:
        last = int(term[0])
        ts, sig, col = ts[:last + 1], sig[:last + 1], col[:last + 1]
        od, cum, t_after = od[:last + 1], cum[:last + 1], t_after[:last + 1]
        terminated = True
    else:
        terminated = False

    t_before = np.exp(-(cum - od))
    alpha_i = -np.expm1(-od)
    w = t_before * alpha_i
    rgb = (w[:, None] * col).sum(axis=0)
    t_final = float(t_after[-1])
    depth = float((w * ts).sum()) + t_final * far
    return rgb, 1.0 - t_final, depth, int(ts.size), terminated


def march_frame(sigma_arr, color_arr, occ_arr, grid_origin, voxel_size,
                cam_pos_arr, cam_rot_arr, res, ss, tan_half_fov,
                near, far, dt, term_eps,
                lens_half_w, lens_z0, lens_z1,
                scene_rot_inv=None, scene_trans=None, scene_scale=1.0,
                scene_min=None, scene_max=None,
                align_rot_inv=None, align_trans=None, align_inv_scale=1.0,
                tmax_map=None, threads=0):
    """Render a res x res frame with ss x ss sub-rays per pixel.

    Returns (rgba, depth, nsamp, nactive, nspans) arrays; rgba is
    premultiplied without background, depth is the opacity-weighted mean
    plus T_final * far.
    """
    sigma = np.ascontiguousarray(sigma_arr, np.float32)
    color = np.ascontiguousarray(color_arr, np.float32)
    occ = np.ascontiguousarray(occ_arr, np.uint8)
    gmin = np.asarray(grid_origin, np.float64)
    dims = sigma.shape
    vs = float(voxel_size)
    gmax = gmin + np.asarray(dims) * vs
    cam_pos = np.asarray(cam_pos_arr, np.float64)
    cam_rot = np.asarray(cam_rot_arr, np.float64)
    if align_rot_inv is None:
        align_rot_inv = np.eye(3)
        align_trans = np.zeros(3)
        align_inv_scale = 1.0
    align_rot_inv = np.asarray(align_rot_inv, np.float64)
    align_trans = np.asarray(align_trans, np.float64)

    w_px = res * ss
    focal = (w_px / 2.0) / tan_half_fov
    ctr = w_px / 2.0

    if scene_min is not None:
        scene_rot_inv = np.asarray(scene_rot_inv, np.float64)
        scene_trans = np.asarray(scene_trans, np.float64)
        scene_o_l = (scene_rot_inv @ (cam_pos - scene_trans)) / scene_scale
    o_f = align_rot_inv @ (cam_pos - align_trans) * align_inv_scale

    out_rgba = np.zeros((res, res, 4), np.float32)
    out_depth = np.zeros((res, res), np.float32)
    out_nsamp = np.zeros((res, res), np.int64)
    out_nact = np.zeros((res, res), np.int32)
    out_nspan = np.zeros((res, res), np.int32)

    inv_ss2 = 1.0 / (ss * ss)
    for oy in range(res):
        for ox in range(res):
            acc = np.zeros(4)
            acc_d = 0.0
            nsamp = 0
            nact = 0
            nspan = 0
            for sy in range(ss):
                for sx in range(ss):
                    px = ox * ss + sx
                    py = oy * ss + sy
                    u = ((px + 0.5) - ctr) / focal
                    v = ((py + 0.5) - ctr) / focal
                    norm = math.sqrt(u * u + v * v + 1.0)
                    d_cam = np.array([u / norm, v / norm, 1.0 / norm])
                    d_w = cam_rot @ d_cam

                    t0, t1 = near, far
                    # lens box slab test; ray origin sits on the box axis,
                    # so parallel components impose no constraint
                    for comp in (d_cam[0], d_cam[1]):
                        if abs(comp) < 1e-300:
                            continue
                        a, b = -lens_half_w / comp, lens_half_w / comp
                        lo, hi = (a, b) if a <= b else (b, a)
                        t0, t1 = max(t0, lo), min(t1, hi)
                    t0 = max(t0, lens_z0 * norm)
                    t1 = min(t1, lens_z1 * norm)

                    if scene_min is not None:
                        d_l = scene_rot_inv @ d_w
                        s0, s1 = -math.inf, math.inf
                        for a in range(3):
                            if abs(d_l[a]) < 1e-300:
                                if not (scene_min[a] <= scene_o_l[a] <= scene_max[a]):
                                    s0, s1 = math.inf, -math.inf
                                continue
                            lo = (scene_min[a] - scene_o_l[a]) / d_l[a]
                            hi = (scene_max[a] - scene_o_l[a]) / d_l[a]
                            if lo > hi:
                                lo, hi = hi, lo
                            s0, s1 = max(s0, lo), min(s1, hi)
                        t0 = max(t0, s0 * scene_scale)
                        t1 = min(t1, s1 * scene_scale)

                    if t0 > t1:
                        acc_d += far
                        continue
                    nact += 1
                    if tmax_map is not None:
                        t1 = min(t1, float(tmax_map[oy, ox]))

                    d_f = align_rot_inv @ d_w
                    g0, g1 = -math.inf, math.inf
                    for a in range(3):
                        if abs(d_f[a]) < 1e-300:
                            if not (gmin[a] <= o_f[a] <= gmax[a]):
                                g0, g1 = math.inf, -math.inf
                            continue
                        lo = (gmin[a] - o_f[a]) / d_f[a]
                        hi = (gmax[a] - o_f[a]) / d_f[a]
                        if lo > hi:
                            lo, hi = hi, lo
                        g0, g1 = max(g0, lo), min(g1, hi)
                    m0 = max(t0, g0 / align_inv_scale)
                    m1 = min(t1, g1 / align_inv_scale)
                    if m0 >= m1:
                        acc_d += far
                        continue

                    runs_f, gaps = dda_runs(occ, gmin, vs, o_f, d_f,
                                            m0 * align_inv_scale, m1 * align_inv_scale)
                    nspan += gaps
                    runs_w = [(a / align_inv_scale, b / align_inv_scale)
                              for (a, b) in runs_f]
                    rgb, alpha, depth, ns, _ = integrate_segments(
                        sigma, color, gmin, vs, dims, o_f, d_f, align_inv_scale,
                        m0, runs_w, dt, term_eps, far)
                    acc[:3] += rgb
                    acc[3] += alpha
                    acc_d += depth
                    nsamp += ns
            out_rgba[oy, ox] = acc * inv_ss2
            out_depth[oy, ox] = acc_d * inv_ss2
            out_nsamp[oy, ox] = nsamp
            out_nact[oy, ox] = nact
            out_nspan[oy, ox] = nspan
    return out_rgba, out_depth, out_nsamp, out_nact, out_nspan
