# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled marching kernel; same contract as _march_py.march_frame.

Per-ray work (box clipping, occupancy DDA, anchored sampling, compositing)
is fused into one pass so no per-ray arrays are materialized. Output rows
are distributed over OpenMP threads; every output value is written by
exactly one thread, keeping results independent of scheduling.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport INFINITY, ceil, exp, fabs, floor, sqrt

cnp.import_array()


cdef inline long _clampi(long x, long lo, long hi) noexcept nogil:
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


cdef struct GridRef:
    const float* sigma
    const float* color
    const unsigned char* occ
    long nx, ny, nz
    double ox, oy, oz         # AABB min
    double mx, my, mz         # AABB max
    double vs, inv_vs


cdef struct FrameParams:
    double crot[9]            # camera->world rotation, row major
    bint has_scene
    double srot[9]            # world->scene-local rotation
    double sol[3]             # camera origin in scene-local coords
    double scene_scale
    double smn[3]
    double smx[3]
    double arot[9]            # world->field rotation
    double of[3]              # camera origin in field coords
    double ais                # 1 / alignment scale
    double near, far, dt, dt_field, term_eps
    double lens_half_w, lens_z0, lens_z1
    double focal, ctr
    int ss
    bint has_tmax


cdef inline double _tri_sigma(const GridRef* g, double px, double py, double pz) noexcept nogil:
    cdef double qx = (px - g.ox) * g.inv_vs - 0.5
    cdef double qy = (py - g.oy) * g.inv_vs - 0.5
    cdef double qz = (pz - g.oz) * g.inv_vs - 0.5
    cdef long ix0 = <long>floor(qx)
    cdef long iy0 = <long>floor(qy)
    cdef long iz0 = <long>floor(qz)
    cdef double fx = qx - ix0
    cdef double fy = qy - iy0
    cdef double fz = qz - iz0
    cdef long xa = _clampi(ix0, 0, g.nx - 1), xb = _clampi(ix0 + 1, 0, g.nx - 1)
    cdef long ya = _clampi(iy0, 0, g.ny - 1), yb = _clampi(iy0 + 1, 0, g.ny - 1)
    cdef long za = _clampi(iz0, 0, g.nz - 1), zb = _clampi(iz0 + 1, 0, g.nz - 1)
    cdef double wx0 = 1.0 - fx, wy0 = 1.0 - fy, wz0 = 1.0 - fz
    cdef long syz = g.ny * g.nz
    cdef double s = 0.0
    s += wx0 * wy0 * wz0 * g.sigma[xa * syz + ya * g.nz + za]
    s += wx0 * wy0 * fz * g.sigma[xa * syz + ya * g.nz + zb]
    s += wx0 * fy * wz0 * g.sigma[xa * syz + yb * g.nz + za]
    s += wx0 * fy * fz * g.sigma[xa * syz + yb * g.nz + zb]
    s += fx * wy0 * wz0 * g.sigma[xb * syz + ya * g.nz + za]
    s += fx * wy0 * fz * g.sigma[xb * syz + ya * g.nz + zb]
    s += fx * fy * wz0 * g.sigma[xb * syz + yb * g.nz + za]
    s += fx * fy * fz * g.sigma[xb * syz + yb * g.nz + zb]
    return s


cdef inline void _tri_color(const GridRef* g, double px, double py, double pz,
                            double* out) noexcept nogil:
    cdef double qx = (px - g.ox) * g.inv_vs - 0.5
    cdef double qy = (py - g.oy) * g.inv_vs - 0.5
    cdef double qz = (pz - g.oz) * g.inv_vs - 0.5
    cdef long ix0 = <long>floor(qx)
    cdef long iy0 = <long>floor(qy)
    cdef long iz0 = <long>floor(qz)
    cdef double fx = qx - ix0
    cdef double fy = qy - iy0
    cdef double fz = qz - iz0
    cdef long xa = _clampi(ix0, 0, g.nx - 1), xb = _clampi(ix0 + 1, 0, g.nx - 1)
    cdef long ya = _clampi(iy0, 0, g.ny - 1), yb = _clampi(iy0 + 1, 0, g.ny - 1)
    cdef long za = _clampi(iz0, 0, g.nz - 1), zb = _clampi(iz0 + 1, 0, g.nz - 1)
    cdef double wx0 = 1.0 - fx, wy0 = 1.0 - fy, wz0 = 1.0 - fz
    cdef long syz = g.ny * g.nz
    cdef const float* base
    cdef double w
    out[0] = 0.0
    out[1] = 0.0
    out[2] = 0.0
    w = wx0 * wy0 * wz0
    base = g.color + (xa * syz + ya * g.nz + za) * 3
    out[0] += w * base[0]; out[1] += w * base[1]; out[2] += w * base[2]
    w = wx0 * wy0 * fz
    base = g.color + (xa * syz + ya * g.nz + zb) * 3
    out[0] += w * base[0]; out[1] += w * base[1]; out[2] += w * base[2]
    w = wx0 * fy * wz0
    base = g.color + (xa * syz + yb * g.nz + za) * 3
    out[0] += w * base[0]; out[1] += w * base[1]; out[2] += w * base[2]
    w = wx0 * fy * fz
    base = g.color + (xa * syz + yb * g.nz + zb) * 3
    out[0] += w * base[0]; out[1] += w * base[1]; out[2] += w * base[2]
    w = fx * wy0 * wz0
    base = g.color + (xb * syz + ya * g.nz + za) * 3
    out[0] += w * base[0]; out[1] += w * base[1]; out[2] += w * base[2]
    w = fx * wy0 * fz
    base = g.color + (xb * syz + ya * g.nz + zb) * 3
    out[0] += w * base[0]; out[1] += w * base[1]; out[2] += w * base[2]
    w = fx * fy * wz0
    base = g.color + (xb * syz + yb * g.nz + za) * 3
    out[0] += w * base[0]; out[1] += w * base[1]; out[2] += w * base[2]
    w = fx * fy * fz
    base = g.color + (xb * syz + yb * g.nz + zb) * 3
    out[0] += w * base[0]; out[1] += w * base[1]; out[2] += w * base[2]


cdef inline bint _sample_run(const GridRef* g, const FrameParams* p,
                             double dfx, double dfy, double dfz,
                             double run0_f, double run1_f, double anchor,
                             double* col, double* trans, double* dep,
                             long* ns) noexcept nogil:
    """Composite anchored samples of one occupied run (run bounds in field t).

    Returns True when transmittance dropped below term_eps.
    """
    cdef double span0_w = run0_f / p.ais
    cdef double span1_w = run1_f / p.ais
    cdef long k = <long>ceil((span0_w - anchor) / p.dt - 0.5)
    cdef double t_k, tf, sig, a_i, w_i
    cdef double csamp[3]
    if k < 0:
        k = 0
    t_k = anchor + (k + 0.5) * p.dt
    while t_k < span1_w:
        tf = t_k * p.ais
        sig = _tri_sigma(g, p.of[0] + tf * dfx, p.of[1] + tf * dfy,
                         p.of[2] + tf * dfz)
        ns[0] += 1
        if sig > 0.0:
            a_i = 1.0 - exp(-sig * p.dt_field)
            _tri_color(g, p.of[0] + tf * dfx, p.of[1] + tf * dfy,
                       p.of[2] + tf * dfz, csamp)
            w_i = trans[0] * a_i
            col[0] += w_i * csamp[0]
            col[1] += w_i * csamp[1]
            col[2] += w_i * csamp[2]
            dep[0] += w_i * t_k
            trans[0] *= (1.0 - a_i)
            if trans[0] < p.term_eps:
                return True
        k += 1
        t_k = anchor + (k + 0.5) * p.dt
    return False


cdef inline double _march_ray(const GridRef* g, const FrameParams* p,
                              double dfx, double dfy, double dfz,
                              double m0, double m1,
                              double* col, double* dep, long* ns,
                              int* nspan) noexcept nogil:
    """DDA over occupied runs of one ray; returns final transmittance."""
    cdef double anchor = m0
    cdef double tf0 = m0 * p.ais
    cdef double tf1 = m1 * p.ais
    cdef double px_f = p.of[0] + tf0 * dfx
    cdef double py_f = p.of[1] + tf0 * dfy
    cdef double pz_f = p.of[2] + tf0 * dfz
    cdef long ix = _clampi(<long>floor((px_f - g.ox) * g.inv_vs), 0, g.nx - 1)
    cdef long iy = _clampi(<long>floor((py_f - g.oy) * g.inv_vs), 0, g.ny - 1)
    cdef long iz = _clampi(<long>floor((pz_f - g.oz) * g.inv_vs), 0, g.nz - 1)
    cdef long stepx = 1 if dfx > 0 else (-1 if dfx < 0 else 0)
    cdef long stepy = 1 if dfy > 0 else (-1 if dfy < 0 else 0)
    cdef long stepz = 1 if dfz > 0 else (-1 if dfz < 0 else 0)
    cdef double tmaxx, tmaxy, tmaxz, tdx, tdy, tdz, nxt
    cdef double t_cur, t_exitv, run_start, trans
    cdef bint in_gap, done, terminated, occ_now
    cdef long syz = g.ny * g.nz

    if stepx != 0:
        nxt = g.ox + (ix + (1 if stepx > 0 else 0)) * g.vs
        tmaxx = tf0 + (nxt - px_f) / dfx
        tdx = g.vs / fabs(dfx)
    else:
        tmaxx = INFINITY
        tdx = INFINITY
    if stepy != 0:
        nxt = g.oy + (iy + (1 if stepy > 0 else 0)) * g.vs
        tmaxy = tf0 + (nxt - py_f) / dfy
        tdy = g.vs / fabs(dfy)
    else:
        tmaxy = INFINITY
        tdy = INFINITY
    if stepz != 0:
        nxt = g.oz + (iz + (1 if stepz > 0 else 0)) * g.vs
        tmaxz = tf0 + (nxt - pz_f) / dfz
        tdz = g.vs / fabs(dfz)
    else:
        tmaxz = INFINITY
        tdz = INFINITY

    trans = 1.0
    t_cur = tf0
    run_start = -INFINITY
    in_gap = False
    done = False
    terminated = False

    while not done:
        t_exitv = tmaxx
        if tmaxy < t_exitv:
            t_exitv = tmaxy
        if tmaxz < t_exitv:
            t_exitv = tmaxz
        if t_exitv > tf1:
            t_exitv = tf1

        occ_now = g.occ[ix * syz + iy * g.nz + iz] != 0
        if occ_now:
            if run_start == -INFINITY:
                run_start = t_cur
            in_gap = False
        else:
            if run_start != -INFINITY:
                terminated = _sample_run(g, p, dfx, dfy, dfz, run_start, t_cur,
                                         anchor, col, &trans, dep, ns)
                run_start = -INFINITY
                if terminated:
                    break
            if not in_gap:
                nspan[0] += 1
                in_gap = True

        if t_exitv >= tf1:
            t_cur = tf1
            done = True
        elif tmaxx <= tmaxy and tmaxx <= tmaxz:
            t_cur = tmaxx
            tmaxx += tdx
            ix += stepx
            if ix < 0 or ix >= g.nx:
                done = True
        elif tmaxy <= tmaxz:
            t_cur = tmaxy
            tmaxy += tdy
            iy += stepy
            if iy < 0 or iy >= g.ny:
                done = True
        else:
            t_cur = tmaxz
            tmaxz += tdz
            iz += stepz
            if iz < 0 or iz >= g.nz:
                done = True

    if run_start != -INFINITY and not terminated:
        _sample_run(g, p, dfx, dfy, dfz, run_start, t_cur,
                    anchor, col, &trans, dep, ns)
    return trans


cdef void _render_pixel(const GridRef* g, const FrameParams* p,
                        const float* tmax_ptr, int res, int oy, int ox,
                        float* rgba_out, float* depth_out,
                        long* ns_out, int* nact_out, int* nspan_out) noexcept nogil:
    cdef int sy, sx, px, py
    cdef double acc_r = 0, acc_g = 0, acc_b = 0, acc_a = 0, acc_d = 0
    cdef long ns = 0
    cdef int nact = 0, nspan = 0
    cdef double u, v, norm, dcx, dcy, dcz, dwx, dwy, dwz
    cdef double t0, t1, lo, hi, a_, comp
    cdef double dlx, dly, dlz, s0, s1
    cdef double dfx, dfy, dfz, g0, g1, m0, m1
    cdef double col[3]
    cdef double dep, trans
    cdef double inv_ss2 = 1.0 / (<double>p.ss * <double>p.ss)
    cdef int a

    for sy in range(p.ss):
        for sx in range(p.ss):
            px = ox * p.ss + sx
            py = oy * p.ss + sy
            u = ((px + 0.5) - p.ctr) / p.focal
            v = ((py + 0.5) - p.ctr) / p.focal
            norm = sqrt(u * u + v * v + 1.0)
            dcx = u / norm
            dcy = v / norm
            dcz = 1.0 / norm
            dwx = p.crot[0] * dcx + p.crot[1] * dcy + p.crot[2] * dcz
            dwy = p.crot[3] * dcx + p.crot[4] * dcy + p.crot[5] * dcz
            dwz = p.crot[6] * dcx + p.crot[7] * dcy + p.crot[8] * dcz

            t0 = p.near
            t1 = p.far
            comp = dcx
            if fabs(comp) >= 1e-300:
                lo = -p.lens_half_w / comp
                hi = p.lens_half_w / comp
                if lo > hi:
                    a_ = lo
                    lo = hi
                    hi = a_
                if lo > t0:
                    t0 = lo
                if hi < t1:
                    t1 = hi
            comp = dcy
            if fabs(comp) >= 1e-300:
                lo = -p.lens_half_w / comp
                hi = p.lens_half_w / comp
                if lo > hi:
                    a_ = lo
                    lo = hi
                    hi = a_
                if lo > t0:
                    t0 = lo
                if hi < t1:
                    t1 = hi
            lo = p.lens_z0 * norm
            hi = p.lens_z1 * norm
            if lo > t0:
                t0 = lo
            if hi < t1:
                t1 = hi

            if p.has_scene:
                dlx = p.srot[0] * dwx + p.srot[1] * dwy + p.srot[2] * dwz
                dly = p.srot[3] * dwx + p.srot[4] * dwy + p.srot[5] * dwz
                dlz = p.srot[6] * dwx + p.srot[7] * dwy + p.srot[8] * dwz
                s0 = -INFINITY
                s1 = INFINITY
                if fabs(dlx) < 1e-300:
                    if not (p.smn[0] <= p.sol[0] <= p.smx[0]):
                        s0 = INFINITY
                        s1 = -INFINITY
                else:
                    lo = (p.smn[0] - p.sol[0]) / dlx
                    hi = (p.smx[0] - p.sol[0]) / dlx
                    if lo > hi:
                        a_ = lo
                        lo = hi
                        hi = a_
                    if lo > s0:
                        s0 = lo
                    if hi < s1:
                        s1 = hi
                if fabs(dly) < 1e-300:
                    if not (p.smn[1] <= p.sol[1] <= p.smx[1]):
                        s0 = INFINITY
                        s1 = -INFINITY
                else:
                    lo = (p.smn[1] - p.sol[1]) / dly
                    hi = (p.smx[1] - p.sol[1]) / dly
                    if lo > hi:
                        a_ = lo
                        lo = hi
                        hi = a_
                    if lo > s0:
                        s0 = lo
                    if hi < s1:
                        s1 = hi
                if fabs(dlz) < 1e-300:
                    if not (p.smn[2] <= p.sol[2] <= p.smx[2]):
                        s0 = INFINITY
                        s1 = -INFINITY
                else:
                    lo = (p.smn[2] - p.sol[2]) / dlz
                    hi = (p.smx[2] - p.sol[2]) / dlz
                    if lo > hi:
                        a_ = lo
                        lo = hi
                        hi = a_
                    if lo > s0:
                        s0 = lo
                    if hi < s1:
                        s1 = hi
                if s0 * p.scene_scale > t0:
                    t0 = s0 * p.scene_scale
                if s1 * p.scene_scale < t1:
                    t1 = s1 * p.scene_scale

            if t0 > t1:
                acc_d += p.far
                continue
            nact += 1
            if p.has_tmax:
                if tmax_ptr[oy * res + ox] < t1:
                    t1 = tmax_ptr[oy * res + ox]

            dfx = p.arot[0] * dwx + p.arot[1] * dwy + p.arot[2] * dwz
            dfy = p.arot[3] * dwx + p.arot[4] * dwy + p.arot[5] * dwz
            dfz = p.arot[6] * dwx + p.arot[7] * dwy + p.arot[8] * dwz

            g0 = -INFINITY
            g1 = INFINITY
            if fabs(dfx) < 1e-300:
                if not (g.ox <= p.of[0] <= g.mx):
                    g0 = INFINITY
                    g1 = -INFINITY
            else:
                lo = (g.ox - p.of[0]) / dfx
                hi = (g.mx - p.of[0]) / dfx
                if lo > hi:
                    a_ = lo
                    lo = hi
                    hi = a_
                if lo > g0:
                    g0 = lo
                if hi < g1:
                    g1 = hi
            if fabs(dfy) < 1e-300:
                if not (g.oy <= p.of[1] <= g.my):
                    g0 = INFINITY
                    g1 = -INFINITY
            else:
                lo = (g.oy - p.of[1]) / dfy
                hi = (g.my - p.of[1]) / dfy
                if lo > hi:
                    a_ = lo
                    lo = hi
                    hi = a_
                if lo > g0:
                    g0 = lo
                if hi < g1:
                    g1 = hi
            if fabs(dfz) < 1e-300:
                if not (g.oz <= p.of[2] <= g.mz):
                    g0 = INFINITY
                    g1 = -INFINITY
            else:
                lo = (g.oz - p.of[2]) / dfz
                hi = (g.mz - p.of[2]) / dfz
                if lo > hi:
                    a_ = lo
                    lo = hi
                    hi = a_
                if lo > g0:
                    g0 = lo
                if hi < g1:
                    g1 = hi

            m0 = t0
            if g0 / p.ais > m0:
                m0 = g0 / p.ais
            m1 = t1
            if g1 / p.ais < m1:
                m1 = g1 / p.ais
            if m0 >= m1:
                acc_d += p.far
                continue

            col[0] = 0.0
            col[1] = 0.0
            col[2] = 0.0
            dep = 0.0
            trans = _march_ray(g, p, dfx, dfy, dfz, m0, m1,
                               col, &dep, &ns, &nspan)
            acc_r += col[0]
            acc_g += col[1]
            acc_b += col[2]
            acc_a += (1.0 - trans)
            acc_d += dep + trans * p.far

    rgba_out[0] = <float>(acc_r * inv_ss2)
    rgba_out[1] = <float>(acc_g * inv_ss2)
    rgba_out[2] = <float>(acc_b * inv_ss2)
    rgba_out[3] = <float>(acc_a * inv_ss2)
    depth_out[0] = <float>(acc_d * inv_ss2)
    ns_out[0] = ns
    nact_out[0] = nact
    nspan_out[0] = nspan


def march_frame(sigma_arr, color_arr, occ_arr, grid_origin, voxel_size,
                cam_pos_arr, cam_rot_arr, int res, int ss, double tan_half_fov,
                double near, double far, double dt, double term_eps,
                double lens_half_w, double lens_z0, double lens_z1,
                scene_rot_inv=None, scene_trans=None, double scene_scale=1.0,
                scene_min=None, scene_max=None,
                align_rot_inv=None, align_trans=None, double align_inv_scale=1.0,
                tmax_map=None, int threads=1):
    cdef const float[:, :, ::1] sigma = np.ascontiguousarray(sigma_arr, np.float32)
    cdef const float[:, :, :, ::1] color = np.ascontiguousarray(color_arr, np.float32)
    cdef const unsigned char[:, :, ::1] occ = np.ascontiguousarray(occ_arr, np.uint8)

    cdef GridRef g
    g.sigma = &sigma[0, 0, 0]
    g.color = &color[0, 0, 0, 0]
    g.occ = &occ[0, 0, 0]
    g.nx = sigma.shape[0]
    g.ny = sigma.shape[1]
    g.nz = sigma.shape[2]
    g.ox = grid_origin[0]
    g.oy = grid_origin[1]
    g.oz = grid_origin[2]
    g.vs = voxel_size
    g.inv_vs = 1.0 / g.vs
    g.mx = g.ox + g.nx * g.vs
    g.my = g.oy + g.ny * g.vs
    g.mz = g.oz + g.nz * g.vs

    cdef FrameParams p
    cdef double[:, ::1] crot = np.ascontiguousarray(cam_rot_arr, np.float64)
    cdef int i, j
    for i in range(3):
        for j in range(3):
            p.crot[i * 3 + j] = crot[i, j]

    cdef double cpx = cam_pos_arr[0], cpy = cam_pos_arr[1], cpz = cam_pos_arr[2]
    cdef double rel0, rel1, rel2
    cdef double[:, ::1] srot
    p.has_scene = scene_min is not None
    if p.has_scene:
        srot = np.ascontiguousarray(scene_rot_inv, np.float64)
        for i in range(3):
            for j in range(3):
                p.srot[i * 3 + j] = srot[i, j]
            p.smn[i] = scene_min[i]
            p.smx[i] = scene_max[i]
        p.scene_scale = scene_scale
        rel0 = cpx - scene_trans[0]
        rel1 = cpy - scene_trans[1]
        rel2 = cpz - scene_trans[2]
        for i in range(3):
            p.sol[i] = (p.srot[i * 3] * rel0 + p.srot[i * 3 + 1] * rel1
                        + p.srot[i * 3 + 2] * rel2) / scene_scale
    else:
        p.scene_scale = 1.0

    cdef double[:, ::1] arot
    cdef double atx = 0, aty = 0, atz = 0
    if align_rot_inv is None:
        for i in range(3):
            for j in range(3):
                p.arot[i * 3 + j] = 1.0 if i == j else 0.0
    else:
        arot = np.ascontiguousarray(align_rot_inv, np.float64)
        for i in range(3):
            for j in range(3):
                p.arot[i * 3 + j] = arot[i, j]
        atx = align_trans[0]
        aty = align_trans[1]
        atz = align_trans[2]
    p.ais = align_inv_scale
    rel0 = cpx - atx
    rel1 = cpy - aty
    rel2 = cpz - atz
    for i in range(3):
        p.of[i] = (p.arot[i * 3] * rel0 + p.arot[i * 3 + 1] * rel1
                   + p.arot[i * 3 + 2] * rel2) * align_inv_scale

    p.near = near
    p.far = far
    p.dt = dt
    p.dt_field = dt * align_inv_scale
    p.term_eps = term_eps
    p.lens_half_w = lens_half_w
    p.lens_z0 = lens_z0
    p.lens_z1 = lens_z1
    p.ss = ss
    cdef int w_px = res * ss
    p.focal = (w_px / 2.0) / tan_half_fov
    p.ctr = w_px / 2.0

    p.has_tmax = tmax_map is not None
    cdef const float[:, ::1] tmax_mv
    if p.has_tmax:
        tmax_mv = np.ascontiguousarray(tmax_map, np.float32)
    else:
        tmax_mv = np.zeros((1, 1), np.float32)
    cdef const float* tmax_ptr = &tmax_mv[0, 0]

    rgba_np = np.zeros((res, res, 4), np.float32)
    depth_np = np.zeros((res, res), np.float32)
    nsamp_np = np.zeros((res, res), np.int64)
    nact_np = np.zeros((res, res), np.int32)
    nspan_np = np.zeros((res, res), np.int32)
    cdef float[:, :, ::1] out_rgba = rgba_np
    cdef float[:, ::1] out_depth = depth_np
    cdef long[:, ::1] out_nsamp = nsamp_np
    cdef int[:, ::1] out_nact = nact_np
    cdef int[:, ::1] out_nspan = nspan_np

    cdef int n_threads = threads if threads >= 1 else 1
    cdef int oy, ox

    with nogil:
        for oy in prange(res, schedule="dynamic", num_threads=n_threads):
            for ox in range(res):
                _render_pixel(&g, &p, tmax_ptr, res, oy, ox,
                              &out_rgba[oy, ox, 0], &out_depth[oy, ox],
                              &out_nsamp[oy, ox], &out_nact[oy, ox],
                              &out_nspan[oy, ox])

    return rgba_np, depth_np, nsamp_np, nact_np, nspan_np
