# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Native kernels: trilinear grid sampling, deformation-composed sphere
tracing, tet location, BVH closest-point, and winding numbers.

Numerics deliberately mirror avatarkit._pykernels so the two backends agree
to rounding error; tests/test_backends.py enforces this. All per-item work
lives in cdef helpers so prange bodies hold no shared C-array locals.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel import prange
from libc.math cimport atan2, fabs, floor, nearbyint, sqrt

cnp.import_array()

BACKEND_NAME = "native"

cdef double BARY_TOL = -1e-9


# ---------------------------------------------------------------------------
# Grid sampling
# ---------------------------------------------------------------------------

cdef double _grid_eval(const float* vals, long nx, long ny, long nz,
                       const double* bmin, const double* bmax,
                       double boundary_min,
                       double px, double py, double pz) noexcept nogil:
    cdef double u[3]
    cdef double p[3]
    cdef long n[3]
    cdef long i, ix, iy, iz
    cdef double cell, r, fx, fy, fz, dx, d2
    cdef bint inside = 1
    cdef const float* base
    cdef double v000, v100, v010, v110, v001, v101, v011, v111
    cdef double cx00, cx10, cx01, cx11, cy0, cy1

    n[0] = nx; n[1] = ny; n[2] = nz
    p[0] = px; p[1] = py; p[2] = pz
    for i in range(3):
        cell = (bmax[i] - bmin[i]) / (n[i] - 1)
        u[i] = (p[i] - bmin[i]) / cell
        r = nearbyint(u[i])
        if fabs(u[i] - r) < 1e-9:
            u[i] = r
        if u[i] < 0.0 or u[i] > n[i] - 1.0:
            inside = 0

    if not inside:
        d2 = 0.0
        for i in range(3):
            dx = bmin[i] - p[i]
            if p[i] - bmax[i] > dx:
                dx = p[i] - bmax[i]
            if dx > 0.0:
                d2 += dx * dx
        return sqrt(d2) + boundary_min

    for i in range(3):
        if u[i] < 0.0:
            u[i] = 0.0
        elif u[i] > n[i] - 1.0:
            u[i] = n[i] - 1.0
    ix = <long>u[0]
    if ix > nx - 2: ix = nx - 2
    iy = <long>u[1]
    if iy > ny - 2: iy = ny - 2
    iz = <long>u[2]
    if iz > nz - 2: iz = nz - 2
    fx = u[0] - ix; fy = u[1] - iy; fz = u[2] - iz

    base = vals + iz * ny * nx + iy * nx + ix
    v000 = base[0]
    v100 = base[1]
    v010 = base[nx]
    v110 = base[nx + 1]
    v001 = base[ny * nx]
    v101 = base[ny * nx + 1]
    v011 = base[ny * nx + nx]
    v111 = base[ny * nx + nx + 1]

    cx00 = v000 + fx * (v100 - v000)
    cx10 = v010 + fx * (v110 - v010)
    cx01 = v001 + fx * (v101 - v001)
    cx11 = v011 + fx * (v111 - v011)
    cy0 = cx00 + fy * (cx10 - cx00)
    cy1 = cx01 + fy * (cx11 - cx01)
    return cy0 + fz * (cy1 - cy0)


def grid_sample(cnp.ndarray vals_arr, bmin_arr, bmax_arr, double boundary_min,
                pts_arr):
    cdef const float[:, :, ::1] vals = np.ascontiguousarray(vals_arr, dtype=np.float32)
    cdef const double[:, ::1] pts = np.ascontiguousarray(np.atleast_2d(pts_arr), dtype=np.float64)
    cdef const double[::1] bmin = np.ascontiguousarray(bmin_arr, dtype=np.float64)
    cdef const double[::1] bmax = np.ascontiguousarray(bmax_arr, dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0]
    out_np = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_np
    cdef long nz = vals.shape[0], ny = vals.shape[1], nx = vals.shape[2]
    cdef Py_ssize_t i
    for i in prange(n, nogil=True, schedule="static"):
        out[i] = _grid_eval(&vals[0, 0, 0], nx, ny, nz, &bmin[0], &bmax[0],
                            boundary_min, pts[i, 0], pts[i, 1], pts[i, 2])
    return out_np


cdef void _grid_eval_rgb(const float* vals, long nx, long ny, long nz,
                         const double* bmin, const double* bmax,
                         double px, double py, double pz,
                         double* rgb) noexcept nogil:
    cdef double u[3]
    cdef double p[3]
    cdef long n[3]
    cdef long i, c, ix, iy, iz
    cdef double cell, r, fx, fy, fz
    cdef const float* base
    cdef long sx, sy, sz
    cdef double v000, v100, v010, v110, v001, v101, v011, v111
    cdef double cx00, cx10, cx01, cx11, cy0, cy1, val

    n[0] = nx; n[1] = ny; n[2] = nz
    p[0] = px; p[1] = py; p[2] = pz
    for i in range(3):
        cell = (bmax[i] - bmin[i]) / (n[i] - 1)
        u[i] = (p[i] - bmin[i]) / cell
        r = nearbyint(u[i])
        if fabs(u[i] - r) < 1e-9:
            u[i] = r
        if u[i] < 0.0:
            u[i] = 0.0
        elif u[i] > n[i] - 1.0:
            u[i] = n[i] - 1.0
    ix = <long>u[0]
    if ix > nx - 2: ix = nx - 2
    iy = <long>u[1]
    if iy > ny - 2: iy = ny - 2
    iz = <long>u[2]
    if iz > nz - 2: iz = nz - 2
    fx = u[0] - ix; fy = u[1] - iy; fz = u[2] - iz

    base = vals + 3 * (iz * ny * nx + iy * nx + ix)
    sx = 3; sy = 3 * nx; sz = 3 * ny * nx
    for c in range(3):
        v000 = base[c]
        v100 = base[sx + c]
        v010 = base[sy + c]
        v110 = base[sy + sx + c]
        v001 = base[sz + c]
        v101 = base[sz + sx + c]
        v011 = base[sz + sy + c]
        v111 = base[sz + sy + sx + c]
        cx00 = v000 + fx * (v100 - v000)
        cx10 = v010 + fx * (v110 - v010)
        cx01 = v001 + fx * (v101 - v001)
        cx11 = v011 + fx * (v111 - v011)
        cy0 = cx00 + fy * (cx10 - cx00)
        cy1 = cx01 + fy * (cx11 - cx01)
        val = cy0 + fz * (cy1 - cy0)
        if val < 0.0:
            val = 0.0
        elif val > 1.0:
            val = 1.0
        rgb[c] = val


def grid_sample_rgb(cnp.ndarray vals_arr, bmin_arr, bmax_arr, pts_arr):
    cdef const float[:, :, :, ::1] vals = np.ascontiguousarray(vals_arr, dtype=np.float32)
    cdef const double[:, ::1] pts = np.ascontiguousarray(np.atleast_2d(pts_arr), dtype=np.float64)
    cdef const double[::1] bmin = np.ascontiguousarray(bmin_arr, dtype=np.float64)
    cdef const double[::1] bmax = np.ascontiguousarray(bmax_arr, dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0]
    out_np = np.empty((n, 3), dtype=np.float64)
    cdef double[:, ::1] out = out_np
    cdef long nz = vals.shape[0], ny = vals.shape[1], nx = vals.shape[2]
    cdef Py_ssize_t i
    for i in prange(n, nogil=True, schedule="static"):
        _grid_eval_rgb(&vals[0, 0, 0, 0], nx, ny, nz, &bmin[0], &bmax[0],
                       pts[i, 0], pts[i, 1], pts[i, 2], &out[i, 0])
    return out_np


# ---------------------------------------------------------------------------
# Warp structures
# ---------------------------------------------------------------------------

cdef struct Warp:
    long m
    const int* tets
    const double* tinv
    const double* v0
    const double* outv
    long gx, gy, gz
    double gbmin[3]
    double gcell[3]
    const int* cstart
    const int* citems


cdef long _warp_locate(const Warp* w, const double* p,
                       double* bary) noexcept nogil:
    """Containing tet id (ascending candidate order) or -1; bary clamped
    and renormalized on success."""
    cdef long ix, iy, iz, cell, s, e, k, t
    cdef double d0, d1, d2, b0, b1, b2, b3, tot
    cdef const double* ti
    if w.m == 0 or w.citems == NULL:
        return -1
    ix = <long>floor((p[0] - w.gbmin[0]) / w.gcell[0])
    iy = <long>floor((p[1] - w.gbmin[1]) / w.gcell[1])
    iz = <long>floor((p[2] - w.gbmin[2]) / w.gcell[2])
    if ix < 0 or iy < 0 or iz < 0 or ix >= w.gx or iy >= w.gy or iz >= w.gz:
        return -1
    cell = ix + w.gx * (iy + w.gy * iz)
    s = w.cstart[cell]
    e = w.cstart[cell + 1]
    for k in range(s, e):
        t = w.citems[k]
        d0 = p[0] - w.v0[3 * t]
        d1 = p[1] - w.v0[3 * t + 1]
        d2 = p[2] - w.v0[3 * t + 2]
        ti = w.tinv + 9 * t
        b1 = ti[0] * d0 + ti[1] * d1 + ti[2] * d2
        b2 = ti[3] * d0 + ti[4] * d1 + ti[5] * d2
        b3 = ti[6] * d0 + ti[7] * d1 + ti[8] * d2
        b0 = 1.0 - b1 - b2 - b3
        if b0 >= BARY_TOL and b1 >= BARY_TOL and b2 >= BARY_TOL and b3 >= BARY_TOL:
            if b0 < 0.0: b0 = 0.0
            if b1 < 0.0: b1 = 0.0
            if b2 < 0.0: b2 = 0.0
            if b3 < 0.0: b3 = 0.0
            tot = b0 + b1 + b2 + b3
            bary[0] = b0 / tot
            bary[1] = b1 / tot
            bary[2] = b2 / tot
            bary[3] = b3 / tot
            return t
    return -1


cdef void _warp_map(const Warp* w, const double* p, double* q) noexcept nogil:
    """Barycentric map to the output vertices; identity outside the hull."""
    cdef double bary[4]
    cdef long t, j, vi
    cdef double q0, q1, q2
    t = _warp_locate(w, p, bary)
    if t < 0:
        q[0] = p[0]; q[1] = p[1]; q[2] = p[2]
        return
    q0 = 0.0; q1 = 0.0; q2 = 0.0
    for j in range(4):
        vi = w.tets[4 * t + j]
        q0 += bary[j] * w.outv[3 * vi]
        q1 += bary[j] * w.outv[3 * vi + 1]
        q2 += bary[j] * w.outv[3 * vi + 2]
    q[0] = q0; q[1] = q1; q[2] = q2


cdef struct Deform:
    int has_pose
    int has_expr
    double minv[18]     # head then torso, row-major 3x3
    double ct[6]        # center + T
    double c[6]         # center
    double cut0, cut1   # y_head, y_torso
    Warp neck
    Warp expr


cdef int _pose_inverse_pt(const Deform* d, const double* p,
                          double* q) noexcept nogil:
    """Region of p in deformed space (0 head, 1 torso, 2 neck); fills q
    with the pose-inverted point."""
    cdef double qh[3]
    cdef double qt[3]
    cdef double v[3]
    cdef double mh, mt
    cdef long i
    for i in range(3):
        v[i] = p[i] - d.ct[i]
    for i in range(3):
        qh[i] = d.minv[3 * i] * v[0] + d.minv[3 * i + 1] * v[1] \
            + d.minv[3 * i + 2] * v[2] + d.c[i]
    for i in range(3):
        v[i] = p[i] - d.ct[3 + i]
    for i in range(3):
        qt[i] = d.minv[9 + 3 * i] * v[0] + d.minv[9 + 3 * i + 1] * v[1] \
            + d.minv[9 + 3 * i + 2] * v[2] + d.c[3 + i]
    mh = qh[1] - d.cut0
    mt = d.cut1 - qt[1]
    if mh > 0.0 and (mt <= 0.0 or mh >= mt):
        q[0] = qh[0]; q[1] = qh[1]; q[2] = qh[2]
        return 0
    if mt > 0.0:
        q[0] = qt[0]; q[1] = qt[1]; q[2] = qt[2]
        return 1
    _warp_map(&d.neck, p, q)
    return 2


cdef int _deform_inverse_pt(const Deform* d, const double* p,
                            double* q) noexcept nogil:
    """Full composite inverse; returns the pose region or -1 without pose."""
    cdef double tmp[3]
    cdef int region = -1
    if d.has_pose:
        region = _pose_inverse_pt(d, p, q)
    else:
        q[0] = p[0]; q[1] = p[1]; q[2] = p[2]
    if d.has_expr:
        tmp[0] = q[0]; tmp[1] = q[1]; tmp[2] = q[2]
        _warp_map(&d.expr, tmp, q)
    return region


# -- pack helpers (python level) --------------------------------------------

cdef _fill_warp(Warp* w, arrays):
    cdef const int[:, ::1] tets = arrays["tets"]
    cdef const double[:, :, ::1] tinv = arrays["tinv"]
    cdef const double[:, ::1] v0 = arrays["v0"]
    cdef const double[:, ::1] outv = arrays["out_verts"]
    cdef const long[::1] gdims = arrays["gdims"]
    cdef const double[::1] gbmin = arrays["gbmin"]
    cdef const double[::1] gcell = arrays["gcell"]
    cdef const int[::1] cstart = arrays["cell_start"]
    cdef const int[::1] citems = arrays["cell_items"]
    w.m = tets.shape[0]
    if w.m == 0:
        w.citems = NULL
        return
    w.tets = &tets[0, 0]
    w.tinv = &tinv[0, 0, 0]
    w.v0 = &v0[0, 0]
    w.outv = &outv[0, 0]
    w.gx = gdims[0]; w.gy = gdims[1]; w.gz = gdims[2]
    w.gbmin[0] = gbmin[0]; w.gbmin[1] = gbmin[1]; w.gbmin[2] = gbmin[2]
    w.gcell[0] = gcell[0]; w.gcell[1] = gcell[1]; w.gcell[2] = gcell[2]
    w.cstart = &cstart[0]
    w.citems = &citems[0] if citems.shape[0] > 0 else NULL


cdef _fill_deform(Deform* d, pack):
    cdef const double[:, :, ::1] minv
    cdef const double[:, ::1] ct
    cdef const double[:, ::1] c
    cdef const double[::1] cut
    cdef long i, j, k
    d.has_pose = 0
    d.has_expr = 0
    d.neck.m = 0
    d.expr.m = 0
    if pack is None:
        return
    if pack.get("has_pose"):
        d.has_pose = 1
        minv = pack["pose_minv"]
        ct = pack["pose_ct"]
        c = pack["pose_c"]
        cut = pack["pose_cut"]
        for k in range(2):
            for i in range(3):
                for j in range(3):
                    d.minv[9 * k + 3 * i + j] = minv[k, i, j]
                d.ct[3 * k + i] = ct[k, i]
                d.c[3 * k + i] = c[k, i]
        d.cut0 = cut[0]
        d.cut1 = cut[1]
        _fill_warp(&d.neck, pack["neck"])
    if pack.get("has_expr"):
        d.has_expr = 1
        _fill_warp(&d.expr, pack["expr"])


# -- public warp entry points ------------------------------------------------

def locate_points(arrays, pts_arr):
    cdef Warp w
    _fill_warp(&w, arrays)
    cdef const double[:, ::1] pts = np.ascontiguousarray(np.atleast_2d(pts_arr), dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0]
    tet_np = np.full(n, -1, dtype=np.int32)
    bary_np = np.zeros((n, 4), dtype=np.float64)
    cdef int[::1] tet = tet_np
    cdef double[:, ::1] bary = bary_np
    cdef Py_ssize_t i
    for i in prange(n, nogil=True, schedule="static"):
        tet[i] = <int>_warp_locate(&w, &pts[i, 0], &bary[i, 0])
    return tet_np, bary_np


def warp_backward(arrays, pts_arr):
    cdef Warp w
    _fill_warp(&w, arrays)
    cdef const double[:, ::1] pts = np.ascontiguousarray(np.atleast_2d(pts_arr), dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0]
    out_np = np.empty((n, 3), dtype=np.float64)
    cdef double[:, ::1] out = out_np
    cdef Py_ssize_t i
    for i in prange(n, nogil=True, schedule="static"):
        _warp_map(&w, &pts[i, 0], &out[i, 0])
    return out_np


def deform_inverse(pack, pts_arr, counts=None):
    cdef Deform d
    _fill_deform(&d, pack)
    cdef const double[:, ::1] pts = np.ascontiguousarray(np.atleast_2d(pts_arr), dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0]
    out_np = np.empty((n, 3), dtype=np.float64)
    cdef double[:, ::1] out = out_np
    cdef Py_ssize_t i
    cdef int region
    cdef long c0 = 0, c1 = 0, c2 = 0
    for i in prange(n, nogil=True, schedule="static"):
        region = _deform_inverse_pt(&d, &pts[i, 0], &out[i, 0])
        if region == 0:
            c0 += 1
        elif region == 1:
            c1 += 1
        elif region == 2:
            c2 += 1
    if counts is not None:
        counts += np.array([c0, c1, c2], dtype=np.int64)
    return out_np


# ---------------------------------------------------------------------------
# Ray marching
# ---------------------------------------------------------------------------

cdef void _march_one(const Deform* d,
                     const float* vp, long nx, long ny, long nz,
                     const double* bmn, const double* bmx,
                     double boundary_min,
                     const double* o, const double* v,
                     double t_max, double hit_eps, double min_step,
                     double lam, long max_steps, double normal_h,
                     double* t_out, unsigned char* hit_out,
                     double* point_out, double* canon_out,
                     double* normal_out, long* cnt) noexcept nogil:
    cdef double p[3]
    cdef double q[3]
    cdef double pp[3]
    cdef double grad[3]
    cdef double ti = 0.0
    cdef double f, g0, g1, nrm
    cdef long step = 0, ax
    cdef int region, was_hit = 0

    while step < max_steps:
        p[0] = o[0] + v[0] * ti
        p[1] = o[1] + v[1] * ti
        p[2] = o[2] + v[2] * ti
        region = _deform_inverse_pt(d, p, q)
        if region >= 0:
            cnt[region] += 1
        f = _grid_eval(vp, nx, ny, nz, bmn, bmx, boundary_min,
                       q[0], q[1], q[2])
        if f <= hit_eps:
            was_hit = 1
            break
        if f < min_step:
            f = min_step
        ti = ti + lam * f
        if ti > t_max:
            break
        step = step + 1
    if step == max_steps and was_hit == 0 and ti <= t_max:
        cnt[3] += 1

    t_out[0] = ti
    p[0] = o[0] + v[0] * ti
    p[1] = o[1] + v[1] * ti
    p[2] = o[2] + v[2] * ti
    point_out[0] = p[0]; point_out[1] = p[1]; point_out[2] = p[2]
    if not was_hit:
        hit_out[0] = 0
        canon_out[0] = p[0]; canon_out[1] = p[1]; canon_out[2] = p[2]
        normal_out[0] = 0.0; normal_out[1] = 0.0; normal_out[2] = 0.0
        return

    hit_out[0] = 1
    _deform_inverse_pt(d, p, q)
    canon_out[0] = q[0]; canon_out[1] = q[1]; canon_out[2] = q[2]
    for ax in range(3):
        pp[0] = p[0]; pp[1] = p[1]; pp[2] = p[2]
        pp[ax] = p[ax] + normal_h
        _deform_inverse_pt(d, pp, q)
        g0 = _grid_eval(vp, nx, ny, nz, bmn, bmx, boundary_min,
                        q[0], q[1], q[2])
        pp[ax] = p[ax] - normal_h
        _deform_inverse_pt(d, pp, q)
        g1 = _grid_eval(vp, nx, ny, nz, bmn, bmx, boundary_min,
                        q[0], q[1], q[2])
        grad[ax] = g0 - g1
    nrm = sqrt(grad[0] * grad[0] + grad[1] * grad[1] + grad[2] * grad[2])
    if nrm > 1e-12:
        normal_out[0] = grad[0] / nrm
        normal_out[1] = grad[1] / nrm
        normal_out[2] = grad[2] / nrm
    else:
        normal_out[0] = 0.0
        normal_out[1] = 0.0
        normal_out[2] = 1.0


def march_rays(orig_arr, dirs_arr, double t_max, double hit_eps,
               double min_step, double lam, long max_steps, double normal_h,
               cnp.ndarray grid_vals, grid_bmin, grid_bmax,
               double boundary_min, pack):
    cdef const double[:, ::1] orig = np.ascontiguousarray(orig_arr, dtype=np.float64)
    cdef const double[:, ::1] dirs = np.ascontiguousarray(dirs_arr, dtype=np.float64)
    cdef const float[:, :, ::1] vals = np.ascontiguousarray(grid_vals, dtype=np.float32)
    cdef const double[::1] bmin = np.ascontiguousarray(grid_bmin, dtype=np.float64)
    cdef const double[::1] bmax = np.ascontiguousarray(grid_bmax, dtype=np.float64)
    cdef Deform d
    _fill_deform(&d, pack)

    cdef Py_ssize_t n = orig.shape[0]
    hit_np = np.zeros(n, dtype=np.uint8)
    t_np = np.zeros(n, dtype=np.float64)
    point_np = np.zeros((n, 3), dtype=np.float64)
    canon_np = np.zeros((n, 3), dtype=np.float64)
    normal_np = np.zeros((n, 3), dtype=np.float64)
    cnt_np = np.zeros((n, 4), dtype=np.int64)
    cdef unsigned char[::1] hit = hit_np
    cdef double[::1] t = t_np
    cdef double[:, ::1] point = point_np
    cdef double[:, ::1] canon = canon_np
    cdef double[:, ::1] normal = normal_np
    cdef long[:, ::1] cnt = cnt_np

    cdef long nzd = vals.shape[0], nyd = vals.shape[1], nxd = vals.shape[2]
    cdef const float* vp = &vals[0, 0, 0]
    cdef const double* bmn = &bmin[0]
    cdef const double* bmx = &bmax[0]
    cdef Py_ssize_t i

    for i in prange(n, nogil=True, schedule="static"):
        _march_one(&d, vp, nxd, nyd, nzd, bmn, bmx, boundary_min,
                   &orig[i, 0], &dirs[i, 0], t_max, hit_eps, min_step, lam,
                   max_steps, normal_h, &t[i], &hit[i], &point[i, 0],
                   &canon[i, 0], &normal[i, 0], &cnt[i, 0])

    totals = cnt_np.sum(axis=0)
    return {
        "hit": hit_np.astype(bool),
        "t": t_np,
        "point": point_np,
        "canon": canon_np,
        "normal": normal_np,
        "steps_exhausted": int(totals[3]),
        "region_counts": totals[:3].copy(),
    }


# ---------------------------------------------------------------------------
# Mesh queries: BVH closest point, winding numbers
# ---------------------------------------------------------------------------

def build_mesh_accel(verts, tris):
    from ._bvh import build_bvh
    return {"bvh": build_bvh(np.asarray(verts, dtype=np.float64),
                             np.asarray(tris, dtype=np.int32))}


cdef double _tri_closest(const double* a, const double* b, const double* c,
                         const double* p, double* bary) noexcept nogil:
    """Squared distance to one triangle + barycentric of the closest point."""
    cdef double ab[3]
    cdef double ac[3]
    cdef double ap[3]
    cdef double bp[3]
    cdef double cp[3]
    cdef double cl[3]
    cdef double diff[3]
    cdef double d1, d2, d3, d4, d5, d6, va, vb, vc, tpar, denom, u, v, w0, dd
    cdef long i
    for i in range(3):
        ab[i] = b[i] - a[i]
        ac[i] = c[i] - a[i]
        ap[i] = p[i] - a[i]
    d1 = ab[0] * ap[0] + ab[1] * ap[1] + ab[2] * ap[2]
    d2 = ac[0] * ap[0] + ac[1] * ap[1] + ac[2] * ap[2]
    u = -1.0; v = -1.0
    if d1 <= 0.0 and d2 <= 0.0:
        u = 0.0; v = 0.0
    if u < 0.0:
        for i in range(3):
            bp[i] = p[i] - b[i]
        d3 = ab[0] * bp[0] + ab[1] * bp[1] + ab[2] * bp[2]
        d4 = ac[0] * bp[0] + ac[1] * bp[1] + ac[2] * bp[2]
        if d3 >= 0.0 and d4 <= d3:
            u = 1.0; v = 0.0
        else:
            vc = d1 * d4 - d3 * d2
            if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
                tpar = d1 / (d1 - d3) if d1 != d3 else 0.0
                u = tpar; v = 0.0
            else:
                for i in range(3):
                    cp[i] = p[i] - c[i]
                d5 = ab[0] * cp[0] + ab[1] * cp[1] + ab[2] * cp[2]
                d6 = ac[0] * cp[0] + ac[1] * cp[1] + ac[2] * cp[2]
                if d6 >= 0.0 and d5 <= d6:
                    u = 0.0; v = 1.0
                else:
                    vb = d5 * d2 - d1 * d6
                    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
                        tpar = d2 / (d2 - d6) if d2 != d6 else 0.0
                        u = 0.0; v = tpar
                    else:
                        va = d3 * d6 - d5 * d4
                        if va <= 0.0 and d4 - d3 >= 0.0 and d5 - d6 >= 0.0:
                            denom = (d4 - d3) + (d5 - d6)
                            tpar = (d4 - d3) / denom if denom != 0.0 else 0.0
                            u = 1.0 - tpar; v = tpar
                        else:
                            denom = va + vb + vc
                            if denom != 0.0:
                                u = vb / denom; v = vc / denom
                            else:
                                u = 0.0; v = 0.0
    if u < 0.0: u = 0.0
    if u > 1.0: u = 1.0
    if v < 0.0: v = 0.0
    if v > 1.0: v = 1.0
    w0 = 1.0 - u - v
    if w0 < 0.0: w0 = 0.0
    if w0 > 1.0: w0 = 1.0
    bary[0] = w0; bary[1] = u; bary[2] = v
    dd = 0.0
    for i in range(3):
        cl[i] = a[i] * w0 + b[i] * u + c[i] * v
        diff[i] = p[i] - cl[i]
        dd += diff[i] * diff[i]
    return dd


cdef double _box_dist2(const double* bmin, const double* bmax,
                       const double* p) noexcept nogil:
    cdef double d = 0.0, dx
    cdef long i
    for i in range(3):
        dx = bmin[i] - p[i]
        if p[i] - bmax[i] > dx:
            dx = p[i] - bmax[i]
        if dx > 0.0:
            d += dx * dx
    return d


cdef void _closest_one(const double* verts, const int* tris,
                       const double* nbmin, const double* nbmax,
                       const int* child_a, const int* child_b,
                       const int* order, const double* p,
                       double* dist_out, int* tri_out,
                       double* bary_out, double* cp_out) noexcept nogil:
    cdef long stack[128]
    cdef double bary[3]
    cdef double best_bary[3]
    cdef long top, node, ca, cb, start, count, k, t, best_t, v0i, v1i, v2i
    cdef double best, d2, da, db

    best = 1e300
    best_t = 0
    best_bary[0] = 1.0; best_bary[1] = 0.0; best_bary[2] = 0.0
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        node = stack[top]
        if _box_dist2(nbmin + 3 * node, nbmax + 3 * node, p) >= best:
            continue
        ca = child_a[node]
        cb = child_b[node]
        if ca < 0:
            start = -ca - 1
            count = cb
            for k in range(start, start + count):
                t = order[k]
                v0i = tris[3 * t]; v1i = tris[3 * t + 1]; v2i = tris[3 * t + 2]
                d2 = _tri_closest(verts + 3 * v0i, verts + 3 * v1i,
                                  verts + 3 * v2i, p, bary)
                if d2 < best:
                    best = d2
                    best_t = t
                    best_bary[0] = bary[0]
                    best_bary[1] = bary[1]
                    best_bary[2] = bary[2]
        else:
            da = _box_dist2(nbmin + 3 * ca, nbmax + 3 * ca, p)
            db = _box_dist2(nbmin + 3 * cb, nbmax + 3 * cb, p)
            if da < db:
                if db < best and top < 127:
                    stack[top] = cb
                    top += 1
                if da < best and top < 127:
                    stack[top] = ca
                    top += 1
            else:
                if da < best and top < 127:
                    stack[top] = ca
                    top += 1
                if db < best and top < 127:
                    stack[top] = cb
                    top += 1
    dist_out[0] = sqrt(best)
    tri_out[0] = <int>best_t
    bary_out[0] = best_bary[0]
    bary_out[1] = best_bary[1]
    bary_out[2] = best_bary[2]
    v0i = tris[3 * best_t]; v1i = tris[3 * best_t + 1]; v2i = tris[3 * best_t + 2]
    for k in range(3):
        cp_out[k] = verts[3 * v0i + k] * best_bary[0] \
            + verts[3 * v1i + k] * best_bary[1] \
            + verts[3 * v2i + k] * best_bary[2]


def closest_point_mesh(verts_arr, tris_arr, accel, pts_arr):
    cdef const double[:, ::1] verts = np.ascontiguousarray(verts_arr, dtype=np.float64)
    cdef const int[:, ::1] tris = np.ascontiguousarray(tris_arr, dtype=np.int32)
    cdef const double[:, ::1] pts = np.ascontiguousarray(np.atleast_2d(pts_arr), dtype=np.float64)
    bvh = accel["bvh"]
    cdef const double[:, ::1] nbmin = bvh["bmin"]
    cdef const double[:, ::1] nbmax = bvh["bmax"]
    cdef const int[::1] child_a = bvh["child_a"]
    cdef const int[::1] child_b = bvh["child_b"]
    cdef const int[::1] order = bvh["order"]

    cdef Py_ssize_t n = pts.shape[0]
    dist_np = np.empty(n, dtype=np.float64)
    tri_np = np.zeros(n, dtype=np.int32)
    bary_np = np.zeros((n, 3), dtype=np.float64)
    cp_np = np.zeros((n, 3), dtype=np.float64)
    cdef double[::1] dist = dist_np
    cdef int[::1] tri_out = tri_np
    cdef double[:, ::1] bary_out = bary_np
    cdef double[:, ::1] cp_out = cp_np
    cdef Py_ssize_t i

    for i in prange(n, nogil=True, schedule="static"):
        _closest_one(&verts[0, 0], &tris[0, 0], &nbmin[0, 0], &nbmax[0, 0],
                     &child_a[0], &child_b[0], &order[0], &pts[i, 0],
                     &dist[i], &tri_out[i], &bary_out[i, 0], &cp_out[i, 0])
    return dist_np, tri_np, bary_np, cp_np


def winding_numbers(verts_arr, tris_arr, pts_arr):
    cdef const double[:, ::1] verts = np.ascontiguousarray(verts_arr, dtype=np.float64)
    cdef const int[:, ::1] tris = np.ascontiguousarray(tris_arr, dtype=np.int32)
    cdef const double[:, ::1] pts = np.ascontiguousarray(np.atleast_2d(pts_arr), dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0]
    cdef Py_ssize_t m = tris.shape[0]
    out_np = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_np
    cdef Py_ssize_t i, t
    cdef double ax, ay, az, bx, by, bz, cx, cy, cz
    cdef double la, lb, lc, num, den, acc
    cdef double TWO_PI = 6.283185307179586476925286766559
    for i in prange(n, nogil=True, schedule="static"):
        acc = 0.0
        for t in range(m):
            ax = verts[tris[t, 0], 0] - pts[i, 0]
            ay = verts[tris[t, 0], 1] - pts[i, 1]
            az = verts[tris[t, 0], 2] - pts[i, 2]
            bx = verts[tris[t, 1], 0] - pts[i, 0]
            by = verts[tris[t, 1], 1] - pts[i, 1]
            bz = verts[tris[t, 1], 2] - pts[i, 2]
            cx = verts[tris[t, 2], 0] - pts[i, 0]
            cy = verts[tris[t, 2], 1] - pts[i, 1]
            cz = verts[tris[t, 2], 2] - pts[i, 2]
            la = sqrt(ax * ax + ay * ay + az * az)
            lb = sqrt(bx * bx + by * by + bz * bz)
            lc = sqrt(cx * cx + cy * cy + cz * cz)
            num = ax * (by * cz - bz * cy) + ay * (bz * cx - bx * cz) \
                + az * (bx * cy - by * cx)
            den = la * lb * lc + (ax * bx + ay * by + az * bz) * lc \
                + (bx * cx + by * cy + bz * cz) * la \
                + (ax * cx + ay * cy + az * cz) * lb
            acc = acc + atan2(num, den)
        out[i] = acc / TWO_PI
    return out_np
