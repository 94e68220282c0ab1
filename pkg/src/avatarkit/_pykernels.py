"""Pure-numpy implementations of the hot kernels.

Selected by avatarkit.backend when the compiled extension is unavailable
(or forced via AVATARKIT_BACKEND=python). The native module implements the
same functions with identical numerics; cross-backend agreement is covered
by tests/test_backends.py.

Shared array conventions:
  * grid scalar values: float32, shape (nz, ny, nx) C-contiguous
    (x varies fastest in memory, matching the SDFG file layout)
  * warp packs: see avatarkit.warp.WarpField.kernel_arrays
"""

import numpy as np

BACKEND_NAME = "python"


# ---------------------------------------------------------------------------
# Grid sampling
# ---------------------------------------------------------------------------

def _lattice_coords(bmin, bmax, dims, pts):
    cell = (bmax - bmin) / (dims - 1)
    u = (pts - bmin) / cell
    r = np.rint(u)
    u = np.where(np.abs(u - r) < 1e-9, r, u)
    return u


def grid_sample(vals, bmin, bmax, boundary_min, pts):
    """Trilinear sample; outside the bbox returns a conservative positive
    bound (distance to bbox + minimum boundary value)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    nz, ny, nx = vals.shape
    dims = np.array([nx, ny, nz], dtype=np.float64)
    u = _lattice_coords(bmin, bmax, dims, pts)

    inside = np.all((u >= 0.0) & (u <= dims - 1.0), axis=1)
    uc = np.clip(u, 0.0, dims - 1.0)
    i = np.minimum(uc.astype(np.int64), (dims - 2.0).astype(np.int64))
    f = uc - i
    ix, iy, iz = i[:, 0], i[:, 1], i[:, 2]
    fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]

    def corner(dx, dy, dz):
        return vals[iz + dz, iy + dy, ix + dx].astype(np.float64)

    cx00 = corner(0, 0, 0) + fx * (corner(1, 0, 0) - corner(0, 0, 0))
    cx10 = corner(0, 1, 0) + fx * (corner(1, 1, 0) - corner(0, 1, 0))
    cx01 = corner(0, 0, 1) + fx * (corner(1, 0, 1) - corner(0, 0, 1))
    cx11 = corner(0, 1, 1) + fx * (corner(1, 1, 1) - corner(0, 1, 1))
    cy0 = cx00 + fy * (cx10 - cx00)
    cy1 = cx01 + fy * (cx11 - cx01)
    out = cy0 + fz * (cy1 - cy0)

    if not inside.all():
        d = np.maximum(np.maximum(bmin - pts, pts - bmax), 0.0)
        far = np.sqrt(np.sum(d * d, axis=1)) + boundary_min
        out = np.where(inside, out, far)
    return out


def grid_sample_rgb(vals, bmin, bmax, pts):
    """Trilinear RGB sample; queries are clamped into the bbox."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    nz, ny, nx = vals.shape[:3]
    dims = np.array([nx, ny, nz], dtype=np.float64)
    u = np.clip(_lattice_coords(bmin, bmax, dims, pts), 0.0, dims - 1.0)
    i = np.minimum(u.astype(np.int64), (dims - 2.0).astype(np.int64))
    f = u - i
    ix, iy, iz = i[:, 0], i[:, 1], i[:, 2]
    fx, fy, fz = (f[:, k, None] for k in range(3))

    def corner(dx, dy, dz):
        return vals[iz + dz, iy + dy, ix + dx].astype(np.float64)

    cx00 = corner(0, 0, 0) + fx * (corner(1, 0, 0) - corner(0, 0, 0))
    cx10 = corner(0, 1, 0) + fx * (corner(1, 1, 0) - corner(0, 1, 0))
    cx01 = corner(0, 0, 1) + fx * (corner(1, 0, 1) - corner(0, 0, 1))
    cx11 = corner(0, 1, 1) + fx * (corner(1, 1, 1) - corner(0, 1, 1))
    cy0 = cx00 + fy * (cx10 - cx00)
    cy1 = cx01 + fy * (cx11 - cx01)
    rgb = cy0 + fz * (cy1 - cy0)
    return np.clip(rgb, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Tet location / piecewise-linear warps
# ---------------------------------------------------------------------------

BARY_TOL = -1e-9


def locate_points(warp_arrays, pts):
    """Find containing tets in the indexed (deformed) tetrahedralization.

    Returns (tet_ids int32[N] with -1 for misses, barycentric float64[N,4]
    clamped to >= 0 and renormalized). Candidate tets are scanned in
    ascending id order, so ties on shared faces resolve deterministically.
    """
    tets = warp_arrays["tets"]
    tinv = warp_arrays["tinv"]
    v0 = warp_arrays["v0"]
    gdims = warp_arrays["gdims"]
    gbmin = warp_arrays["gbmin"]
    gcell = warp_arrays["gcell"]
    cell_start = warp_arrays["cell_start"]
    cell_items = warp_arrays["cell_items"]

    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    n = len(pts)
    out_tet = np.full(n, -1, dtype=np.int32)
    out_bary = np.zeros((n, 4), dtype=np.float64)
    if len(tets) == 0:
        return out_tet, out_bary

    u = np.floor((pts - gbmin) / gcell).astype(np.int64)
    inb = np.all(u >= 0, axis=1) & np.all(u < gdims, axis=1)
    cells = u[:, 0] + gdims[0] * (u[:, 1] + gdims[1] * u[:, 2])
    cells = np.where(inb, cells, 0)

    start = cell_start[cells]
    count = cell_start[cells + 1] - start
    count = np.where(inb, count, 0)
    pending = count > 0
    if not pending.any():
        return out_tet, out_bary

    kmax = int(count.max())
    for k in range(kmax):
        sel = pending & (k < count)
        if not sel.any():
            break
        idx = np.nonzero(sel)[0]
        tids = cell_items[start[idx] + k]
        d = pts[idx] - v0[tids]
        b123 = np.einsum("nij,nj->ni", tinv[tids], d)
        b0 = 1.0 - b123.sum(axis=1)
        bary = np.concatenate([b0[:, None], b123], axis=1)
        ok = np.all(bary >= BARY_TOL, axis=1)
        hit = idx[ok]
        out_tet[hit] = tids[ok]
        b = np.maximum(bary[ok], 0.0)
        out_bary[hit] = b / b.sum(axis=1, keepdims=True)
        pending[hit] = False
    return out_tet, out_bary


def warp_backward(warp_arrays, pts):
    """Barycentric map through the located tets; identity outside the hull."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    tet_ids, bary = locate_points(warp_arrays, pts)
    out = pts.copy()
    found = tet_ids >= 0
    if found.any():
        corners = warp_arrays["out_verts"][warp_arrays["tets"][tet_ids[found]]]
        out[found] = np.einsum("nk,nkj->nj", bary[found], corners)
    return out


# ---------------------------------------------------------------------------
# Composite deformation inverse  (pose inverse, then expression inverse)
# ---------------------------------------------------------------------------

def _pose_inverse(pack, pts, counts):
    minv = pack["pose_minv"]
    ct = pack["pose_ct"]
    c = pack["pose_c"]
    y_head, y_torso = pack["pose_cut"]

    qh = (pts - ct[0]) @ minv[0].T + c[0]
    qt = (pts - ct[1]) @ minv[1].T + c[1]
    mh = qh[:, 1] - y_head
    mt = y_torso - qt[:, 1]
    head = (mh > 0.0) & ((mt <= 0.0) | (mh >= mt))
    torso = (mt > 0.0) & ~head
    neck = ~head & ~torso

    out = np.empty_like(pts)
    out[head] = qh[head]
    out[torso] = qt[torso]
    if neck.any():
        out[neck] = warp_backward(pack["neck"], pts[neck])
    if counts is not None:
        counts += np.array([head.sum(), torso.sum(), neck.sum()], dtype=np.int64)
    return out


def deform_inverse(pack, pts, counts=None):
    """Inverse of the composite deformation for a batch of points."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    q = _pose_inverse(pack, pts, counts) if pack["has_pose"] else pts
    if pack["has_expr"]:
        q = warp_backward(pack["expr"], q)
    return q


# ---------------------------------------------------------------------------
# Ray marching
# ---------------------------------------------------------------------------

def march_rays(orig, dirs, t_max, hit_eps, min_step, lam, max_steps, normal_h,
               grid_vals, grid_bmin, grid_bmax, boundary_min, pack):
    """Sphere-trace rays through the (optionally deformed) grid field.

    Steps by lam * max(f, min_step); a ray hits when f <= hit_eps. Returns
    hit mask, hit parameters/points (deformed space), canonical-space hit
    points, normals of the composed field, the count of step-exhausted rays,
    and head/torso/neck sample tallies.
    """
    orig = np.ascontiguousarray(orig, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    n = len(orig)
    t = np.zeros(n)
    hit = np.zeros(n, dtype=bool)
    alive = np.ones(n, dtype=bool)
    counts = np.zeros(3, dtype=np.int64)

    def field(pts, tally):
        q = deform_inverse(pack, pts, counts if tally else None) \
            if pack is not None else pts
        return grid_sample(grid_vals, grid_bmin, grid_bmax, boundary_min, q), q

    for _ in range(max_steps):
        idx = np.nonzero(alive)[0]
        if len(idx) == 0:
            break
        p = orig[idx] + dirs[idx] * t[idx, None]
        f, _ = field(p, tally=True)
        now_hit = f <= hit_eps
        hit[idx[now_hit]] = True
        alive[idx[now_hit]] = False
        adv = idx[~now_hit]
        t[adv] += lam * np.maximum(f[~now_hit], min_step)
        dead = adv[t[adv] > t_max]
        alive[dead] = False
    steps_exhausted = int(alive.sum())

    point = orig + dirs * t[:, None]
    canon = point.copy()
    normal = np.zeros((n, 3))
    h_idx = np.nonzero(hit)[0]
    if len(h_idx):
        ph = point[h_idx]
        _, canon_h = field(ph, tally=False)
        canon[h_idx] = canon_h
        grad = np.empty((len(h_idx), 3))
        for ax in range(3):
            off = np.zeros(3)
            off[ax] = normal_h
            fp, _ = field(ph + off, tally=False)
            fm, _ = field(ph - off, tally=False)
            grad[:, ax] = fp - fm
        norm = np.linalg.norm(grad, axis=1)
        ok = norm > 1e-12
        grad[ok] /= norm[ok, None]
        grad[~ok] = (0.0, 0.0, 1.0)
        normal[h_idx] = grad

    return {
        "hit": hit,
        "t": t,
        "point": point,
        "canon": canon,
        "normal": normal,
        "steps_exhausted": steps_exhausted,
        "region_counts": counts,
    }


# ---------------------------------------------------------------------------
# Mesh queries (closest surface point, generalized winding number)
# ---------------------------------------------------------------------------

def closest_point_triangles(pts, tri_verts):
    """Exact closest point on each triangle for paired (point, triangle) rows.

    tri_verts has shape (N, 3, 3). Returns (squared distance, closest point,
    barycentric) arrays. Standard region-based point-triangle projection.
    """
    a, b, c = tri_verts[:, 0], tri_verts[:, 1], tri_verts[:, 2]
    ab = b - a
    ac = c - a
    ap = pts - a

    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = pts - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = pts - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    # Voronoi-region masks in the same order as the sequential algorithm
    m_a = (d1 <= 0) & (d2 <= 0)
    m_b = (d3 >= 0) & (d4 <= d3)
    m_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    m_c = (d6 >= 0) & (d5 <= d6)
    m_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    m_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)

    with np.errstate(divide="ignore", invalid="ignore"):
        t_ab = np.where(d1 - d3 != 0, d1 / (d1 - d3), 0.0)
        t_ac = np.where(d2 - d6 != 0, d2 / (d2 - d6), 0.0)
        den_bc = (d4 - d3) + (d5 - d6)
        t_bc = np.where(den_bc != 0, (d4 - d3) / den_bc, 0.0)
        denom = va + vb + vc
        u_in = np.where(denom != 0, vb / denom, 0.0)
        v_in = np.where(denom != 0, vc / denom, 0.0)

    t_ab = np.clip(t_ab, 0.0, 1.0)
    t_ac = np.clip(t_ac, 0.0, 1.0)
    t_bc = np.clip(t_bc, 0.0, 1.0)

    # u multiplies ab, v multiplies ac; select order mirrors the if-chain
    masks = [m_a, m_b, m_ab, m_c, m_ac, m_bc]
    u = np.select(masks, [0.0, 1.0, t_ab, 0.0, 0.0, 1.0 - t_bc], default=u_in)
    v = np.select(masks, [0.0, 0.0, 0.0, 1.0, t_ac, t_bc], default=v_in)
    u = np.clip(u, 0.0, 1.0)
    v = np.clip(v, 0.0, 1.0)
    w0 = np.clip(1.0 - u - v, 0.0, 1.0)

    closest = a * w0[:, None] + b * u[:, None] + c * v[:, None]
    diff = pts - closest
    d2_out = np.einsum("ij,ij->i", diff, diff)
    bary = np.stack([w0, u, v], axis=1)
    return d2_out, closest, bary


def build_mesh_accel(verts, tris):
    """Acceleration structure for closest-point queries (kd-tree flavor)."""
    from scipy.spatial import cKDTree

    tv = verts[tris]
    centroids = tv.mean(axis=1)
    radii = np.linalg.norm(tv - centroids[:, None], axis=2).max(axis=1)
    return {"tree": cKDTree(centroids), "max_radius": float(radii.max())}


def closest_point_mesh(verts, tris, accel, pts, k=16):
    """Closest surface point over a whole mesh.

    Uses a kd-tree on triangle centroids for candidates, then widens the
    search radius by the largest triangle circumradius so the exact nearest
    triangle cannot be missed. Returns (distance, tri index, barycentric,
    closest point).
    """
    kdtree = accel["tree"]
    tri_max_radius = accel["max_radius"]
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    n = len(pts)
    kq = min(k, len(tris))
    d_cent, cand = kdtree.query(pts, k=kq)
    if kq == 1:
        cand = cand[:, None]

    best_d2 = np.full(n, np.inf)
    best_tri = np.zeros(n, dtype=np.int32)
    best_bary = np.zeros((n, 3))
    best_pt = np.zeros((n, 3))
    tv = verts[tris]

    def consider(p_idx, tri_idx):
        d2, cp, bary = closest_point_triangles(pts[p_idx], tv[tri_idx])
        better = d2 < best_d2[p_idx]
        upd = p_idx[better]
        best_d2[upd] = d2[better]
        best_tri[upd] = tri_idx[better]
        best_bary[upd] = bary[better]
        best_pt[upd] = cp[better]

    all_idx = np.arange(n)
    for j in range(kq):
        consider(all_idx, cand[:, j].astype(np.int64))

    # Guaranteed-exact pass: any centroid within upper bound + max radius
    ub = np.sqrt(best_d2)
    extra = kdtree.query_ball_point(pts, ub + tri_max_radius + 1e-12)
    for i, lst in enumerate(extra):
        if len(lst) > kq:
            tri_idx = np.asarray(lst, dtype=np.int64)
            consider(np.full(len(tri_idx), i, dtype=np.int64), tri_idx)

    return np.sqrt(best_d2), best_tri, best_bary, best_pt


def winding_numbers(verts, tris, pts, chunk=2048):
    """Generalized winding number via summed signed solid angles."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    out = np.empty(len(pts))
    tv = verts[tris]  # (T,3,3)
    for s in range(0, len(pts), chunk):
        p = pts[s:s + chunk]
        a = tv[None, :, 0] - p[:, None]
        b = tv[None, :, 1] - p[:, None]
        c = tv[None, :, 2] - p[:, None]
        la = np.linalg.norm(a, axis=2)
        lb = np.linalg.norm(b, axis=2)
        lc = np.linalg.norm(c, axis=2)
        num = np.einsum("ptj,ptj->pt", a, np.cross(b, c))
        den = (la * lb * lc + np.einsum("ptj,ptj->pt", a, b) * lc
               + np.einsum("ptj,ptj->pt", b, c) * la
               + np.einsum("ptj,ptj->pt", a, c) * lb)
        out[s:s + chunk] = np.sum(np.arctan2(num, den), axis=1) / (2.0 * np.pi)
    return out
