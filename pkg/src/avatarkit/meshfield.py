"""Triangle-mesh-backed fields: signed distance via nearest triangle +
generalized winding number, per-vertex color lookup, plane cross-sections,
and mesh <-> grid conversion. OBJ (xyzrgb extension) and binary PLY I/O."""

import struct
import warnings

import numpy as np

from .backend import kernels
from .errors import ValidationError
from .fields import ColorField, GridField, ScalarField
from .mathutil import bbox_diagonal

WINDING_INSIDE = 0.5  # winding number above this counts as inside


class MeshField(ScalarField):
    """Signed distance of a triangle mesh.

    Unsigned distance comes from the exact nearest triangle; the sign from
    the generalized winding number (inside when w > 0.5), which tolerates
    small holes. Degenerate (near zero-area) triangles are dropped at load.
    """

    def __init__(self, vertices, triangles, vertex_colors=None):
        v = np.ascontiguousarray(vertices, dtype=np.float64)
        t = np.ascontiguousarray(triangles, dtype=np.int32)
        if len(v) < 3 or len(t) < 1:
            raise ValidationError("mesh needs at least 3 vertices and 1 triangle")
        if t.min() < 0 or t.max() >= len(v):
            raise ValidationError("triangle index out of range")

        diag = bbox_diagonal((v.min(axis=0), v.max(axis=0)))
        e1 = v[t[:, 1]] - v[t[:, 0]]
        e2 = v[t[:, 2]] - v[t[:, 0]]
        area2 = np.linalg.norm(np.cross(e1, e2), axis=1)
        keep = area2 > 1e-14 * max(diag, 1e-30) ** 2
        self.dropped_degenerate = int((~keep).sum())
        t = t[keep]
        if len(t) == 0:
            raise ValidationError("mesh has no non-degenerate triangles")

        self.vertices = v
        self.triangles = t
        self.vertex_colors = None
        if vertex_colors is not None:
            vc = np.asarray(vertex_colors, dtype=np.float64)
            if vc.shape != (len(v), 3):
                raise ValidationError("vertex_colors must be (n_vertices, 3)")
            self.vertex_colors = np.clip(vc, 0.0, 1.0)

        margin = 0.02 * diag
        self.bbox = (v.min(axis=0) - margin, v.max(axis=0) + margin)
        self._accel = None
        self._boundary_edges = None

    @property
    def accel(self):
        if self._accel is None:
            self._accel = kernels.build_mesh_accel(self.vertices, self.triangles)
        return self._accel

    @property
    def is_closed(self):
        """True when every edge is shared by exactly two triangles."""
        return self.boundary_edge_count == 0

    @property
    def boundary_edge_count(self):
        if self._boundary_edges is None:
            t = self.triangles
            edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
            edges = np.sort(edges, axis=1)
            _, counts = np.unique(edges, axis=0, return_counts=True)
            self._boundary_edges = int((counts != 2).sum())
        return self._boundary_edges

    def closest_surface(self, pts):
        """(distance, triangle id, barycentric, closest point) per query."""
        return kernels.closest_point_mesh(self.vertices, self.triangles,
                                          self.accel, np.atleast_2d(
                                              np.asarray(pts, dtype=np.float64)))

    def winding(self, pts):
        return kernels.winding_numbers(self.vertices, self.triangles,
                                       np.atleast_2d(np.asarray(pts, dtype=np.float64)))

    def sample(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        dist, _, _, _ = self.closest_surface(pts)
        sign = np.where(self.winding(pts) > WINDING_INSIDE, -1.0, 1.0)
        return dist * sign

    @property
    def normal_step(self):
        return 1e-4 * self.bbox_diag


class MeshVertexColorField(ColorField):
    """Color of the closest surface point, barycentric over vertex colors."""

    def __init__(self, mesh):
        if mesh.vertex_colors is None:
            raise ValidationError("mesh has no vertex colors")
        self.mesh = mesh

    def sample_rgb(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        _, tri, bary, _ = self.mesh.closest_surface(pts)
        corners = self.mesh.vertex_colors[self.mesh.triangles[tri]]
        rgb = np.einsum("nk,nkj->nj", bary, corners)
        return np.clip(rgb, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Mesh -> grid conversion
# ---------------------------------------------------------------------------

def mesh_to_grid(mesh, dims, padding=0.0):
    """Bake a mesh into a signed-distance GridField.

    Per lattice point: unsigned nearest-triangle distance, negated where the
    generalized winding number exceeds 0.5. Open meshes produce a warning
    (sign is unreliable without an enclosed volume) but still a usable
    unsigned-dominant field.
    """
    dims = tuple(int(d) for d in dims)
    if min(dims) < 16:
        raise ValidationError("mesh_to_grid needs dims >= 16 per axis")
    v = mesh.vertices
    bmin = v.min(axis=0) - padding
    bmax = v.max(axis=0) + padding
    if padding <= 0:
        pad = 0.05 * bbox_diagonal((bmin, bmax))
        bmin, bmax = bmin - pad, bmax + pad

    axes = [np.linspace(bmin[i], bmax[i], dims[i]) for i in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)

    dist, _, _, _ = mesh.closest_surface(pts)
    w = mesh.winding(pts)
    vals = np.where(w > WINDING_INSIDE, -dist, dist).reshape(dims)

    ambiguous = float(np.mean(np.abs(w - 0.5) < 0.25))
    if not mesh.is_closed or ambiguous > 0.05:
        warnings.warn(
            f"mesh is not watertight ({mesh.boundary_edge_count} boundary "
            f"edges, {ambiguous:.1%} ambiguous voxels); signs may be "
            "unreliable", stacklevel=2)

    grid = GridField(vals, (bmin, bmax))
    grid.sign_ambiguous_fraction = ambiguous
    return grid


# ---------------------------------------------------------------------------
# Plane cross-sections (used for cage control loops)
# ---------------------------------------------------------------------------

def cross_section_loops(mesh, y, eps_shift=1e-9):
    """Ordered closed polylines where the mesh meets the plane y = const.

    Intersection points are computed once per crossed edge, so loop chaining
    is exact. Vertices exactly on the plane are avoided by nudging the plane
    by eps_shift * bbox diagonal.
    """
    v = mesh.vertices
    t = mesh.triangles
    yq = float(y)
    side = v[:, 1] - yq
    if np.any(side == 0.0):
        yq += eps_shift * max(mesh.bbox_diag, 1.0)
        side = v[:, 1] - yq

    tri_side = side[t]
    crossing = (tri_side.min(axis=1) < 0) & (tri_side.max(axis=1) > 0)
    if not crossing.any():
        return []

    def edge_key(a, b):
        return (a, b) if a < b else (b, a)

    edge_points = {}

    def edge_point(a, b):
        key = edge_key(a, b)
        p = edge_points.get(key)
        if p is None:
            ta = side[a] / (side[a] - side[b])
            p = v[a] + ta * (v[b] - v[a])
            edge_points[key] = p
        return key

    # each crossing triangle contributes one segment between two edge ids
    adjacency = {}
    for tri in t[crossing]:
        keys = []
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            if (side[a] < 0) != (side[b] < 0):
                keys.append(edge_point(int(a), int(b)))
        if len(keys) == 2:
            adjacency.setdefault(keys[0], []).append(keys[1])
            adjacency.setdefault(keys[1], []).append(keys[0])

    loops = []
    visited = set()
    for start in sorted(adjacency):
        if start in visited:
            continue
        loop = [start]
        visited.add(start)
        cur, prev = start, None
        while True:
            nxt = None
            for cand in adjacency[cur]:
                if cand != prev and (cand not in visited or cand == start):
                    nxt = cand
                    break
            if nxt is None or nxt == start:
                break
            loop.append(nxt)
            visited.add(nxt)
            prev, cur = cur, nxt
        if len(loop) >= 3:
            loops.append(np.array([edge_points[k] for k in loop]))
    return loops


def resample_loop(points, n):
    """Resample a closed polyline to n points at uniform arc length."""
    points = np.asarray(points, dtype=float)
    closed = np.vstack([points, points[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0:
        raise ValidationError("cross-section loop has zero length")
    targets = np.arange(n) * total / n
    idx = np.searchsorted(cum, targets, side="right") - 1
    idx = np.clip(idx, 0, len(seg) - 1)
    frac = (targets - cum[idx]) / np.maximum(seg[idx], 1e-300)
    return closed[idx] + frac[:, None] * (closed[idx + 1] - closed[idx])


# ---------------------------------------------------------------------------
# Procedural meshes
# ---------------------------------------------------------------------------

def icosphere(subdivisions=2, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Subdivided icosahedron projected to a sphere."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=float)
    verts /= np.linalg.norm(verts[0])
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = list(verts)
    for _ in range(subdivisions):
        cache = {}

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts[a] + verts[b]
                m /= np.linalg.norm(m)
                cache[key] = len(verts)
                verts.append(m)
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    v = np.array(verts) * radius + np.asarray(center, dtype=float)
    return v, np.array(faces, dtype=np.int32)


# ---------------------------------------------------------------------------
# OBJ / PLY I/O
# ---------------------------------------------------------------------------

def load_obj(path):
    """OBJ with optional per-vertex colors ('v x y z r g b')."""
    verts, colors, faces = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                vals = [float(x) for x in parts[1:]]
                verts.append(vals[:3])
                if len(vals) >= 6:
                    colors.append(vals[3:6])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
                for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not verts or not faces:
        raise ValidationError(f"{path}: no usable geometry in OBJ")
    vc = np.array(colors) if len(colors) == len(verts) else None
    return MeshField(np.array(verts), np.array(faces, dtype=np.int32), vc)


def save_obj(path, mesh):
    with open(path, "w", encoding="utf-8") as fh:
        vc = mesh.vertex_colors
        for i, v in enumerate(mesh.vertices):
            if vc is not None:
                fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g} "
                         f"{vc[i][0]:.9g} {vc[i][1]:.9g} {vc[i][2]:.9g}\n")
            else:
                fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for f in mesh.triangles:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def load_ply(path):
    """Binary little-endian PLY with x/y/z (float) and optional
    red/green/blue (uchar) vertex properties."""
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise ValidationError(f"{path}: not a PLY file")
        fmt = None
        n_verts = n_faces = 0
        vert_props = []
        element = None
        while True:
            line = fh.readline()
            if not line:
                raise ValidationError(f"{path}: unexpected end of PLY header")
            tokens = line.decode("ascii", "replace").split()
            if not tokens:
                continue
            if tokens[0] == "format":
                fmt = tokens[1]
            elif tokens[0] == "element":
                element = tokens[1]
                if element == "vertex":
                    n_verts = int(tokens[2])
                elif element == "face":
                    n_faces = int(tokens[2])
            elif tokens[0] == "property" and element == "vertex":
                vert_props.append((tokens[-1], tokens[1]))
            elif tokens[0] == "end_header":
                break
        if fmt != "binary_little_endian":
            raise ValidationError(f"{path}: only binary_little_endian PLY supported")

        type_map = {"float": "<f4", "float32": "<f4", "double": "<f8",
                    "uchar": "u1", "uint8": "u1", "int": "<i4",
                    "uint": "<u4", "short": "<i2", "ushort": "<u2"}
        dtype = np.dtype([(name, type_map[t]) for name, t in vert_props])
        vdata = np.frombuffer(fh.read(dtype.itemsize * n_verts), dtype=dtype)
        verts = np.stack([vdata["x"], vdata["y"], vdata["z"]], axis=1).astype(float)
        colors = None
        names = vdata.dtype.names
        if all(c in names for c in ("red", "green", "blue")):
            colors = np.stack([vdata["red"], vdata["green"], vdata["blue"]],
                              axis=1).astype(float) / 255.0

        faces = []
        for _ in range(n_faces):
            (count,) = struct.unpack("<B", fh.read(1))
            idx = struct.unpack(f"<{count}i", fh.read(4 * count))
            for k in range(1, count - 1):
                faces.append([idx[0], idx[k], idx[k + 1]])
    return MeshField(verts, np.array(faces, dtype=np.int32), colors)


def save_ply(path, mesh):
    has_color = mesh.vertex_colors is not None
    with open(path, "wb") as fh:
        header = ["ply", "format binary_little_endian 1.0",
                  f"element vertex {len(mesh.vertices)}",
                  "property float x", "property float y", "property float z"]
        if has_color:
            header += ["property uchar red", "property uchar green",
                       "property uchar blue"]
        header += [f"element face {len(mesh.triangles)}",
                   "property list uchar int vertex_indices", "end_header"]
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        for i, v in enumerate(mesh.vertices):
            fh.write(struct.pack("<3f", *v))
            if has_color:
                rgb = np.clip(np.round(mesh.vertex_colors[i] * 255), 0, 255)
                fh.write(struct.pack("<3B", *rgb.astype(int)))
        for f in mesh.triangles:
            fh.write(struct.pack("<B3i", 3, *f))


def load_mesh(path):
    path = str(path)
    if path.lower().endswith(".obj"):
        return load_obj(path)
    if path.lower().endswith(".ply"):
        return load_ply(path)
    raise ValidationError(f"unsupported mesh format: {path}")
