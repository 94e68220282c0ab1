"""Space deformations.

Two building blocks:
  * WarpField — piecewise-linear map over a shared tetrahedralization
    (neutral connectivity, deformed vertex positions). The backward map
    (deformed -> neutral) is the rendering primitive; points outside the
    tet hull map to themselves.
  * PoseDeform — rigid/scaled head and torso cages split at y_head/y_torso
    with a Delaunay-interpolated neck band between two resampled
    cross-section control loops.

CompositeDeform chains them: forward = pose(expression(x)); inverse applies
the pose inverse first, then the expression backward map.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.spatial import Delaunay, QhullError

from . import _pykernels
from .backend import kernels
from .errors import ValidationError
from .mathutil import bbox_corners, bbox_diagonal, euler_xyz_deg, inflate_bbox
from .meshfield import cross_section_loops, resample_loop

BARY_TOL = 1e-9
JITTER_SCALE = 1e-7   # x bbox diagonal, for near-degenerate Delaunay inputs
VOL_FLOOR_SCALE = 1e-12  # x bbox diagonal cubed


# ---------------------------------------------------------------------------
# Tetrahedral meshes
# ---------------------------------------------------------------------------

def _signed_volumes(verts, tets):
    c = verts[tets]
    e = c[:, 1:] - c[:, :1]
    return np.linalg.det(e) / 6.0


class TetMesh:
    """Positively oriented tets over neutral vertex positions."""

    def __init__(self, vertices, tets, vol_floor=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        tets = np.ascontiguousarray(tets, dtype=np.int32)
        if vol_floor is None:
            diag = bbox_diagonal((self.vertices.min(0), self.vertices.max(0)))
            vol_floor = VOL_FLOOR_SCALE * diag ** 3
        self.vol_floor = float(vol_floor)

        vols = _signed_volumes(self.vertices, tets)
        flip = vols < 0
        tets = tets.copy()
        tets[flip] = tets[flip][:, [0, 1, 3, 2]]
        vols = np.abs(vols)
        if (vols <= self.vol_floor).any():
            raise ValidationError(
                f"{int((vols <= self.vol_floor).sum())} degenerate tets "
                "below the volume floor")
        self.tets = tets
        self._adjacency = None

    def __len__(self):
        return len(self.tets)

    def signed_volumes(self, vertices=None):
        v = self.vertices if vertices is None else np.asarray(vertices, float)
        return _signed_volumes(v, self.tets)

    @property
    def adjacency(self):
        """(M,4) neighbor ids; entry j is the tet across the face opposite
        vertex j, or -1 on the boundary."""
        if self._adjacency is None:
            faces = {}
            adj = np.full((len(self.tets), 4), -1, dtype=np.int32)
            for ti, tet in enumerate(self.tets):
                for j in range(4):
                    face = tuple(sorted(np.delete(tet, j)))
                    other = faces.pop(face, None)
                    if other is None:
                        faces[face] = (ti, j)
                    else:
                        oi, oj = other
                        adj[ti, j] = oi
                        adj[oi, oj] = ti
            self._adjacency = adj
        return self._adjacency


def delaunay_3d(points, base_seed=0, max_attempts=4):
    """Delaunay tetrahedralization in which every input point is a vertex.

    Near-degenerate inputs (Qhull failure, dropped points, or sub-floor
    tets) are retried with recorded uniform jitter of magnitude
    JITTER_SCALE x bbox diagonal. Returns (TetMesh, diagnostics).
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if len(points) < 5:
        raise ValidationError("Delaunay needs at least 5 points")
    centered = points - points.mean(axis=0)
    if np.linalg.matrix_rank(centered, tol=1e-12) < 3:
        raise ValidationError("Delaunay input points are all coplanar")
    diag = bbox_diagonal((points.min(0), points.max(0)))
    vol_floor = VOL_FLOOR_SCALE * diag ** 3

    diagnostics = {"jitter_applied": False, "jitter_seed": None,
                   "jitter_scale": 0.0}
    pts = points
    last_err = None
    for attempt in range(max_attempts):
        try:
            tri = Delaunay(pts)
            if len(tri.coplanar) == 0 and \
                    len(np.unique(tri.simplices)) == len(pts):
                mesh = TetMesh(pts, tri.simplices, vol_floor=vol_floor)
                return mesh, diagnostics
            last_err = "input points dropped from the triangulation"
        except (QhullError, ValidationError) as exc:
            last_err = str(exc)
        seed = base_seed + attempt
        rng = np.random.default_rng(seed)
        scale = JITTER_SCALE * diag * (10.0 ** attempt)
        pts = points + rng.uniform(-scale, scale, points.shape)
        diagnostics = {"jitter_applied": True, "jitter_seed": seed,
                       "jitter_scale": scale}
    raise ValidationError(f"Delaunay failed after jitter retries: {last_err}")


# ---------------------------------------------------------------------------
# Locate index + warp fields
# ---------------------------------------------------------------------------

def _build_locate_arrays(verts, tets, out_verts, vol_floor):
    """Pack one direction of a warp: point location over `verts`' tets,
    output via barycentric blend of `out_verts`."""
    corners = verts[tets]
    e = np.transpose(corners[:, 1:] - corners[:, :1], (0, 2, 1))  # cols=edges
    det = np.linalg.det(e)
    valid = np.abs(det) > vol_floor * 6.0
    tinv = np.zeros((len(tets), 3, 3))
    if valid.any():
        tinv[valid] = np.linalg.inv(e[valid])

    vmin = verts.min(axis=0)
    vmax = verts.max(axis=0)
    span = np.maximum(vmax - vmin, 1e-12)
    target = int(np.clip(round(1.5 * len(tets) ** (1.0 / 3.0)), 2, 40))
    gdims = np.full(3, target, dtype=np.int64)
    gcell = span / gdims
    gbmin = vmin - 1e-9 * span

    n_cells = int(np.prod(gdims))
    lo = np.floor((corners.min(axis=1) - gbmin) / gcell).astype(np.int64)
    hi = np.floor((corners.max(axis=1) - gbmin) / gcell).astype(np.int64)
    lo = np.clip(lo, 0, gdims - 1)
    hi = np.clip(hi, 0, gdims - 1)

    counts = np.zeros(n_cells + 1, dtype=np.int64)
    spans = []
    for ti in range(len(tets)):
        if not valid[ti]:
            spans.append(None)
            continue
        xs = np.arange(lo[ti, 0], hi[ti, 0] + 1)
        ys = np.arange(lo[ti, 1], hi[ti, 1] + 1)
        zs = np.arange(lo[ti, 2], hi[ti, 2] + 1)
        cx, cy, cz = np.meshgrid(xs, ys, zs, indexing="ij")
        cells = (cx + gdims[0] * (cy + gdims[1] * cz)).ravel()
        spans.append(cells)
        counts[cells + 1] += 1
    cell_start = np.cumsum(counts)
    cell_items = np.zeros(int(cell_start[-1]), dtype=np.int32)
    cursor = cell_start[:-1].copy()
    for ti, cells in enumerate(spans):  # ascending tet id => sorted lists
        if cells is None:
            continue
        cell_items[cursor[cells]] = ti
        cursor[cells] += 1

    return {
        "tets": np.ascontiguousarray(tets, dtype=np.int32),
        "tinv": np.ascontiguousarray(tinv),
        "v0": np.ascontiguousarray(corners[:, 0]),
        "out_verts": np.ascontiguousarray(out_verts, dtype=np.float64),
        "gdims": np.ascontiguousarray(gdims),
        "gbmin": np.ascontiguousarray(gbmin),
        "gcell": np.ascontiguousarray(gcell),
        "cell_start": np.ascontiguousarray(cell_start, dtype=np.int32),
        "cell_items": cell_items,
    }


class WarpField:
    """Piecewise-linear deformation: neutral tets + deformed positions."""

    def __init__(self, tet_mesh, deformed_positions, diagnostics=None):
        deformed = np.ascontiguousarray(deformed_positions, dtype=np.float64)
        if deformed.shape != tet_mesh.vertices.shape:
            raise ValidationError("deformed positions must match the "
                                  "neutral vertex count")
        self.tet_mesh = tet_mesh
        self.deformed = deformed
        self.diagnostics = dict(diagnostics or {})
        self.is_identity = bool(
            np.max(np.abs(deformed - tet_mesh.vertices), initial=0.0) == 0.0)
        self._arrays = {}

    @property
    def inverted_tet_count(self):
        return int((self.tet_mesh.signed_volumes(self.deformed) <= 0).sum())

    def _direction_arrays(self, direction):
        if direction not in self._arrays:
            neutral = self.tet_mesh.vertices
            if direction == "backward":
                src, dst = self.deformed, neutral
            else:
                src, dst = neutral, self.deformed
            self._arrays[direction] = _build_locate_arrays(
                src, self.tet_mesh.tets, dst, self.tet_mesh.vol_floor)
        return self._arrays[direction]

    def locate(self, point):
        """Containing deformed tet of one point: (tet_id, barycentric) or
        None outside the hull."""
        arrays = self._direction_arrays("backward")
        tet, bary = kernels.locate_points(arrays, np.asarray(point, float)[None])
        if tet[0] < 0:
            return None
        return int(tet[0]), bary[0]

    def backward(self, pts):
        """Deformed space -> neutral space (identity outside the hull)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        if self.is_identity:
            return pts.copy()
        return kernels.warp_backward(self._direction_arrays("backward"), pts)

    def forward(self, pts):
        """Neutral space -> deformed space (identity outside the hull)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        if self.is_identity:
            return pts.copy()
        return kernels.warp_backward(self._direction_arrays("forward"), pts)


def locate(warp, point):
    return warp.locate(point)


def backward_warp(warp, point):
    return warp.backward(np.asarray(point, float)[None])[0]


def default_anchors(bbox):
    """8 corners of the 1.2x-inflated bbox; they pin the far field."""
    return bbox_corners(inflate_bbox(bbox, 1.2))


def build_expression_warp(aug_neutral, aug_deformed, anchors, base_seed=0):
    """Warp from augmented neutral landmarks to augmented deformed ones,
    with fixed anchor points appended to both sides."""
    if aug_neutral.indices() != aug_deformed.indices():
        raise ValidationError("augmented landmark sets are not index-aligned")
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
    neutral = np.concatenate([aug_neutral.control_points(), anchors])
    deformed = np.concatenate([aug_deformed.control_points(), anchors])
    mesh, diag = delaunay_3d(neutral, base_seed=base_seed)
    if diag["jitter_applied"]:
        # keep control identity: jittered neutral needs matching deformed
        deformed = deformed + (mesh.vertices - neutral)
    return WarpField(mesh, deformed, diagnostics=diag)


# ---------------------------------------------------------------------------
# Cages
# ---------------------------------------------------------------------------

HEAD, TORSO, NECK = 0, 1, 2


def cage_membership(points, y_head, y_torso):
    """0 = head (y > y_head), 1 = torso (y < y_torso), 2 = neck."""
    if y_torso >= y_head:
        raise ValidationError(
            f"y_torso ({y_torso}) must be below y_head ({y_head})")
    y = np.atleast_2d(np.asarray(points, dtype=float))[:, 1]
    return np.where(y > y_head, HEAD, np.where(y < y_torso, TORSO, NECK))


@dataclass
class RigidScale:
    """x' = center + T + R S (x - center), S diagonal."""

    T: np.ndarray
    R: np.ndarray
    S: np.ndarray

    def __post_init__(self):
        self.T = np.asarray(self.T, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        self.S = np.asarray(self.S, dtype=float)
        if (self.S <= 0).any():
            raise ValidationError("cage scale entries must be > 0")

    @classmethod
    def identity(cls):
        return cls(np.zeros(3), np.eye(3), np.ones(3))

    @classmethod
    def from_json(cls, obj):
        obj = obj or {}
        T = np.asarray(obj.get("t", [0.0, 0.0, 0.0]), dtype=float)
        euler = obj.get("euler", [0.0, 0.0, 0.0])
        R = euler_xyz_deg(*euler) if any(euler) else np.eye(3)
        S = np.asarray(obj.get("s", [1.0, 1.0, 1.0]), dtype=float)
        return cls(T, R, S)

    @property
    def is_identity(self):
        return (np.all(self.T == 0.0) and np.all(self.R == np.eye(3))
                and np.all(self.S == 1.0))

    def matrix(self):
        return self.R @ np.diag(self.S)

    def inverse_matrix(self):
        return np.diag(1.0 / self.S) @ self.R.T

    def apply(self, pts, center):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return center + self.T + (pts - center) @ self.matrix().T

    def invert(self, pts, center):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return (pts - center - self.T) @ self.inverse_matrix().T + center


@dataclass
class CageSpec:
    kind: str                 # "head" | "torso"
    cut_height: float
    center: np.ndarray
    transform: RigidScale

    def contains(self, points):
        y = np.atleast_2d(np.asarray(points, dtype=float))[:, 1]
        return y > self.cut_height if self.kind == "head" else y < self.cut_height

    def apply(self, pts):
        return self.transform.apply(pts, self.center)

    def invert(self, pts):
        return self.transform.invert(pts, self.center)


def cage_transform(cage, point):
    return cage.apply(np.asarray(point, float)[None])[0]


@dataclass
class PoseParams:
    head: RigidScale
    torso: RigidScale

    @classmethod
    def identity(cls):
        return cls(RigidScale.identity(), RigidScale.identity())

    @classmethod
    def from_json(cls, obj):
        obj = obj or {}
        return cls(RigidScale.from_json(obj.get("head")),
                   RigidScale.from_json(obj.get("torso")))

    @property
    def is_identity(self):
        return self.head.is_identity and self.torso.is_identity

    def pose_code(self):
        """Concatenated head+torso transform parameters."""
        return np.concatenate([
            self.head.T, self.head.R.ravel(), self.head.S,
            self.torso.T, self.torso.R.ravel(), self.torso.S])


class PoseDeform:
    """Composite head/torso rigid motion with a warped neck band."""

    def __init__(self, head, torso, neck, loop_counts):
        self.head = head
        self.torso = torso
        self.neck = neck
        self.loop_counts = loop_counts
        self.is_identity = (head.transform.is_identity
                            and torso.transform.is_identity)

    @property
    def y_head(self):
        return self.head.cut_height

    @property
    def y_torso(self):
        return self.torso.cut_height

    def forward(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        if self.is_identity:
            return pts.copy()
        labels = cage_membership(pts, self.y_head, self.y_torso)
        out = np.empty_like(pts)
        m = labels == HEAD
        if m.any():
            out[m] = self.head.apply(pts[m])
        m = labels == TORSO
        if m.any():
            out[m] = self.torso.apply(pts[m])
        m = labels == NECK
        if m.any():
            out[m] = self.neck.forward(pts[m])
        return out

    def pack_arrays(self):
        minv = np.stack([self.head.transform.inverse_matrix(),
                         self.torso.transform.inverse_matrix()])
        ct = np.stack([self.head.center + self.head.transform.T,
                       self.torso.center + self.torso.transform.T])
        c = np.stack([self.head.center, self.torso.center])
        return {
            "pose_minv": np.ascontiguousarray(minv),
            "pose_ct": np.ascontiguousarray(ct),
            "pose_c": np.ascontiguousarray(c),
            "pose_cut": np.array([self.y_head, self.y_torso], dtype=float),
            "neck": self.neck._direction_arrays("backward"),
        }


def build_pose_warp(mesh, y_head, y_torso, pose, samples_per_loop=32,
                    anchors=None, base_seed=1):
    """Head/torso cage deformation with Delaunay neck interpolation.

    Control points: each cross-section loop of the mesh at y_head and
    y_torso, resampled to samples_per_loop points at uniform arc length,
    plus fixed bbox anchors. Head-loop controls move with the head
    transform, torso-loop controls with the torso transform.
    """
    if y_torso >= y_head:
        raise ValidationError(
            f"y_torso ({y_torso}) must be below y_head ({y_head})")
    if samples_per_loop < 8:
        raise ValidationError("samples_per_loop must be >= 8")

    loops = {}
    for kind, height in (("head", y_head), ("torso", y_torso)):
        raw = cross_section_loops(mesh, height)
        if not raw:
            raise ValidationError(
                f"{kind} cut at y={height} misses the mesh")
        loops[kind] = [resample_loop(lp, samples_per_loop) for lp in raw]

    v = mesh.vertices
    head_center = v[v[:, 1] > y_head].mean(axis=0) \
        if (v[:, 1] > y_head).any() else np.array([0.0, y_head, 0.0])
    torso_center = v[v[:, 1] < y_torso].mean(axis=0) \
        if (v[:, 1] < y_torso).any() else np.array([0.0, y_torso, 0.0])

    head_cage = CageSpec("head", float(y_head), head_center, pose.head)
    torso_cage = CageSpec("torso", float(y_torso), torso_center, pose.torso)

    if anchors is None:
        anchors = default_anchors((v.min(axis=0), v.max(axis=0)))
    head_pts = np.concatenate(loops["head"])
    torso_pts = np.concatenate(loops["torso"])
    neutral = np.concatenate([head_pts, torso_pts, anchors])
    deformed = np.concatenate([head_cage.apply(head_pts),
                               torso_cage.apply(torso_pts), anchors])
    tet_mesh, diag = delaunay_3d(neutral, base_seed=base_seed)
    if diag["jitter_applied"]:
        deformed = deformed + (tet_mesh.vertices - neutral)
    neck = WarpField(tet_mesh, deformed, diagnostics=diag)
    return PoseDeform(head_cage, torso_cage, neck,
                      {"head": [len(lp) for lp in loops["head"]],
                       "torso": [len(lp) for lp in loops["torso"]]})


# ---------------------------------------------------------------------------
# Composite deformation
# ---------------------------------------------------------------------------

class CompositeDeform:
    """Expression warp followed by pose (forward); inverse applies the pose
    inverse first, then the expression backward map."""

    def __init__(self, expression=None, pose=None):
        self.expression = expression
        self.pose = pose
        self._pack = None

    @property
    def is_identity(self):
        expr_id = self.expression is None or self.expression.is_identity
        pose_id = self.pose is None or self.pose.is_identity
        return expr_id and pose_id

    def kernel_pack(self):
        if self._pack is None:
            pack = {"has_pose": 0, "has_expr": 0}
            if self.pose is not None and not self.pose.is_identity:
                pack.update(self.pose.pack_arrays())
                pack["has_pose"] = 1
            if self.expression is not None and not self.expression.is_identity:
                pack["expr"] = self.expression._direction_arrays("backward")
                pack["has_expr"] = 1
            self._pack = pack
        return self._pack

    def inverse(self, pts, counts=None):
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        if self.is_identity:
            return pts.copy()
        return _pykernels.deform_inverse(self.kernel_pack(), pts, counts)

    def forward(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        q = pts if self.expression is None else self.expression.forward(pts)
        return q if self.pose is None else self.pose.forward(q)

    def diagnostics(self):
        out = {"identity": self.is_identity}
        if self.expression is not None:
            out["expression"] = {
                "inverted_tets": self.expression.inverted_tet_count,
                **self.expression.diagnostics,
            }
        if self.pose is not None:
            out["pose"] = {
                "inverted_tets": self.pose.neck.inverted_tet_count,
                "loop_samples": self.pose.loop_counts,
                **self.pose.neck.diagnostics,
            }
        return out


def inverse_deform(composite, point):
    """Deformed-space point -> canonical-space point."""
    return composite.inverse(np.asarray(point, float)[None])[0]
