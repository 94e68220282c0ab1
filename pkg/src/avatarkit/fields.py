"""Scalar (signed-distance) and color fields plus ray queries.

Sign convention is fixed package-wide: f < 0 strictly inside the surface.
Backends: analytic primitives, trilinear grids (the production render path),
and triangle meshes (avatarkit.meshfield). Grids round-trip through the
binary SDFG/RGBG formats documented in io helpers below.
"""

import struct
from dataclasses import dataclass, field as dc_field

import numpy as np

from .backend import kernels
from .errors import ValidationError
from .mathutil import bbox_diagonal, union_bbox


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.direction = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(self.direction)
        if abs(n - 1.0) > 1e-9:
            raise ValidationError(f"ray direction must be unit length, got |v|={n}")

    def at(self, t):
        return self.origin + self.direction * t


class ScalarField:
    """Base: f(x) evaluated on (N,3) batches, negative inside."""

    bbox = None  # (min, max) arrays

    def sample(self, pts):
        raise NotImplementedError

    @property
    def bbox_diag(self):
        return bbox_diagonal(self.bbox)

    @property
    def normal_step(self):
        """Suggested finite-difference step for normal estimation."""
        return 1e-4 * self.bbox_diag


class SphereField(ScalarField):
    def __init__(self, center=(0.0, 0.0, 0.0), radius=1.0):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        r = self.radius
        self.bbox = (self.center - r, self.center + r)

    def sample(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.linalg.norm(pts - self.center, axis=1) - self.radius


class PlaneField(ScalarField):
    """Half-space: f(x) = normal . x - offset (negative below the plane)."""

    def __init__(self, normal=(0.0, 1.0, 0.0), offset=0.0, extent=10.0):
        self.normal = np.asarray(normal, dtype=float)
        self.normal /= np.linalg.norm(self.normal)
        self.offset = float(offset)
        self.bbox = (-extent * np.ones(3), extent * np.ones(3))

    def sample(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return pts @ self.normal - self.offset


class CapsuleField(ScalarField):
    def __init__(self, a, b, radius):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.radius = float(radius)
        lo = np.minimum(self.a, self.b) - self.radius
        hi = np.maximum(self.a, self.b) + self.radius
        self.bbox = (lo, hi)

    def sample(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        ba = self.b - self.a
        pa = pts - self.a
        h = np.clip((pa @ ba) / (ba @ ba), 0.0, 1.0)
        return np.linalg.norm(pa - h[:, None] * ba, axis=1) - self.radius


class RoundedBoxField(ScalarField):
    def __init__(self, center, half_extents, rounding=0.0):
        self.center = np.asarray(center, dtype=float)
        self.half = np.asarray(half_extents, dtype=float)
        self.rounding = float(rounding)
        r = self.half + self.rounding
        self.bbox = (self.center - r, self.center + r)

    def sample(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        q = np.abs(pts - self.center) - self.half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside - self.rounding


class SmoothUnionField(ScalarField):
    """Polynomial smooth-min union of child fields (blend width k)."""

    def __init__(self, children, k=0.05):
        if not children:
            raise ValidationError("smooth union needs at least one child")
        self.children = list(children)
        self.k = float(k)
        lo, hi = union_bbox([c.bbox for c in children])
        self.bbox = (lo - self.k, hi + self.k)

    def sample(self, pts):
        d = self.children[0].sample(pts)
        for child in self.children[1:]:
            d2 = child.sample(pts)
            h = np.clip(0.5 + 0.5 * (d2 - d) / self.k, 0.0, 1.0)
            d = d2 + (d - d2) * h - self.k * h * (1.0 - h)
        return d


class GridField(ScalarField):
    """Trilinearly interpolated scalar grid.

    `values` is indexed values[ix, iy, iz]; lattice point (i, j, k) sits at
    bmin + (i, j, k) * cell. Outside the bbox, sampling returns the distance
    to the bbox plus the minimum boundary value (a conservative positive
    bound whenever the surface is interior).
    """

    def __init__(self, values, bbox):
        values = np.asarray(values)
        if values.ndim != 3 or min(values.shape) < 2:
            raise ValidationError("grid values must be 3-D with dims >= 2 per axis")
        bmin = np.asarray(bbox[0], dtype=float)
        bmax = np.asarray(bbox[1], dtype=float)
        if not np.all(bmin < bmax):
            raise ValidationError("grid bbox min must be strictly below max")
        self.dims = tuple(int(d) for d in values.shape)
        self.bbox = (bmin, bmax)
        # stored z-major so that flat memory is x-fastest (file layout)
        self._vals = np.ascontiguousarray(values.transpose(2, 1, 0),
                                          dtype=np.float32)
        b = self._vals
        self.boundary_min = float(min(b[0].min(), b[-1].min(),
                                      b[:, 0].min(), b[:, -1].min(),
                                      b[:, :, 0].min(), b[:, :, -1].min()))
        self.cell = (bmax - bmin) / (np.array(self.dims) - 1)

    @property
    def values(self):
        return self._vals.transpose(2, 1, 0)

    @property
    def normal_step(self):
        return 0.25 * float(self.cell.min())

    def sample(self, pts):
        return kernels.grid_sample(self._vals, self.bbox[0], self.bbox[1],
                                   self.boundary_min, np.atleast_2d(
                                       np.asarray(pts, dtype=np.float64)))

    @classmethod
    def from_field(cls, field, dims, bbox=None):
        """Sample any ScalarField onto a lattice."""
        if bbox is None:
            bbox = field.bbox
        dims = tuple(int(d) for d in dims)
        axes = [np.linspace(bbox[0][i], bbox[1][i], dims[i]) for i in range(3)]
        gx, gy, gz = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)
        vals = field.sample(pts).reshape(dims)
        return cls(vals, bbox)


# ---------------------------------------------------------------------------
# Color fields
# ---------------------------------------------------------------------------

class ColorField:
    def sample_rgb(self, pts):
        raise NotImplementedError


class ConstantColorField(ColorField):
    def __init__(self, rgb):
        self.rgb = np.clip(np.asarray(rgb, dtype=float), 0.0, 1.0)

    def sample_rgb(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.tile(self.rgb, (len(pts), 1))


class GridColorField(ColorField):
    """RGB grid with trilinear interpolation; queries clamp into the bbox."""

    def __init__(self, values, bbox):
        values = np.asarray(values)
        if values.ndim != 4 or values.shape[3] != 3 or min(values.shape[:3]) < 2:
            raise ValidationError("color grid must have shape (nx,ny,nz,3)")
        bmin = np.asarray(bbox[0], dtype=float)
        bmax = np.asarray(bbox[1], dtype=float)
        if not np.all(bmin < bmax):
            raise ValidationError("color grid bbox min must be below max")
        self.dims = tuple(int(d) for d in values.shape[:3])
        self.bbox = (bmin, bmax)
        self._vals = np.ascontiguousarray(values.transpose(2, 1, 0, 3),
                                          dtype=np.float32)

    @property
    def values(self):
        return self._vals.transpose(2, 1, 0, 3)

    def sample_rgb(self, pts):
        return kernels.grid_sample_rgb(self._vals, self.bbox[0], self.bbox[1],
                                       np.atleast_2d(np.asarray(pts, dtype=np.float64)))

    @classmethod
    def from_function(cls, fn, dims, bbox):
        dims = tuple(int(d) for d in dims)
        axes = [np.linspace(bbox[0][i], bbox[1][i], dims[i]) for i in range(3)]
        gx, gy, gz = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)
        rgb = np.clip(fn(pts), 0.0, 1.0).reshape(dims + (3,))
        return cls(rgb, bbox)


# ---------------------------------------------------------------------------
# Point evaluation wrappers
# ---------------------------------------------------------------------------

def eval_sdf(field, point):
    point = np.asarray(point, dtype=float)
    if not np.all(np.isfinite(point)):
        raise ValidationError(f"non-finite query point: {point}")
    return float(field.sample(point[None])[0])


def eval_color(field, point):
    point = np.asarray(point, dtype=float)
    return np.clip(field.sample_rgb(point[None])[0], 0.0, 1.0)


# ---------------------------------------------------------------------------
# Ray / surface queries
# ---------------------------------------------------------------------------

@dataclass
class RayHit:
    t: float
    point: np.ndarray
    f_value: float
    used_fallback: bool = False


def ray_surface_intersection(field, ray, t_max, eps, *, min_step=None,
                             max_steps=4096, n_fallback=256,
                             eps_fallback=None):
    """First surface crossing along a ray.

    Sphere-traces until |f| <= eps, refining by bisection across the first
    sign change. If no sign change occurs within [0, t_max], falls back to
    dense sampling (n_fallback uniform samples) and accepts the argmin of
    |f| when it is <= eps_fallback (default 4 * eps). Returns None on a miss.
    """
    if t_max <= 0 or eps <= 0:
        raise ValidationError("t_max and eps must be positive")
    if min_step is None:
        min_step = eps
    if eps_fallback is None:
        eps_fallback = 4.0 * eps

    o, v = ray.origin, ray.direction

    def f_at(t):
        return float(field.sample((o + v * t)[None])[0])

    def bisect(t_lo, t_hi):
        f_lo = f_at(t_lo)
        for _ in range(128):
            t_mid = 0.5 * (t_lo + t_hi)
            f_mid = f_at(t_mid)
            if abs(f_mid) <= eps * 1e-3 or (t_hi - t_lo) < 1e-14 * max(1.0, t_max):
                return t_mid, f_mid
            if (f_mid > 0) == (f_lo > 0):
                t_lo, f_lo = t_mid, f_mid
            else:
                t_hi = t_mid
        return t_mid, f_mid

    t = 0.0
    t_prev = 0.0
    f_prev = None
    for _ in range(max_steps):
        f = f_at(t)
        if f_prev is not None and f_prev > 0 and f < 0:
            t_hit, f_hit = bisect(t_prev, t)
            return RayHit(t_hit, o + v * t_hit, f_hit)
        if abs(f) <= eps:
            return RayHit(t, o + v * t, f)
        t_prev, f_prev = t, f
        t += max(f, min_step)
        if t > t_max:
            break

    # no crossing: dense argmin fallback for grazing rays
    ts = np.linspace(0.0, t_max, n_fallback)
    fs = field.sample(o[None] + v[None] * ts[:, None])
    k = int(np.argmin(np.abs(fs)))
    t_best, f_best = float(ts[k]), float(fs[k])
    # one parabolic refinement around the best sample
    if 0 < k < n_fallback - 1:
        f0, f1, f2 = abs(fs[k - 1]), abs(fs[k]), abs(fs[k + 1])
        denom = f0 - 2 * f1 + f2
        if denom > 1e-300:
            dt = ts[1] - ts[0]
            t_ref = ts[k] + 0.5 * dt * (f0 - f2) / denom
            f_ref = f_at(t_ref)
            if abs(f_ref) < abs(f_best):
                t_best, f_best = t_ref, f_ref
    if abs(f_best) <= eps_fallback:
        return RayHit(t_best, o + v * t_best, f_best, used_fallback=True)
    return None


def estimate_normal(field, point, h, return_degenerate=False):
    """Central-difference surface normal; degenerate gradients map to +z."""
    if h <= 0:
        raise ValidationError("finite-difference step h must be positive")
    point = np.asarray(point, dtype=float)
    offsets = np.zeros((6, 3))
    for ax in range(3):
        offsets[2 * ax, ax] = h
        offsets[2 * ax + 1, ax] = -h
    f = field.sample(point[None] + offsets)
    g = np.array([f[0] - f[1], f[2] - f[3], f[4] - f[5]])
    n = np.linalg.norm(g)
    degenerate = n < 1e-12
    out = np.array([0.0, 0.0, 1.0]) if degenerate else g / n
    if return_degenerate:
        return out, degenerate
    return out


# ---------------------------------------------------------------------------
# Binary grid files: SDFG (scalar) and RGBG (color)
# ---------------------------------------------------------------------------
# Header: magic (4 bytes), version u32=1, dims 3xu32 (nx,ny,nz),
# bbox 6xf32 (min, max); then little-endian f32 payload, x-fastest
# (1 value per lattice point for SDFG, 3 for RGBG).

_HEADER = struct.Struct("<4sI3I6f")


def _write_grid_file(path, magic, dims, bbox, flat_f32):
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(magic, 1, *dims,
                              *np.asarray(bbox[0], dtype=np.float32),
                              *np.asarray(bbox[1], dtype=np.float32)))
        fh.write(flat_f32.astype("<f4").tobytes())


def _read_grid_file(path, magic, channels):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise ValidationError(f"{path}: truncated grid header")
        m, version, nx, ny, nz, *bb = _HEADER.unpack(head)
        if m != magic:
            raise ValidationError(f"{path}: bad magic {m!r}, expected {magic!r}")
        if version != 1:
            raise ValidationError(f"{path}: unsupported version {version}")
        count = nx * ny * nz * channels
        data = np.frombuffer(fh.read(count * 4), dtype="<f4")
        if len(data) != count:
            raise ValidationError(f"{path}: payload has {len(data)} values, "
                                  f"expected {count}")
    bbox = (np.array(bb[:3], dtype=float), np.array(bb[3:], dtype=float))
    return (nx, ny, nz), bbox, data


def write_sdf_grid(path, grid):
    nx, ny, nz = grid.dims
    _write_grid_file(path, b"SDFG", (nx, ny, nz), grid.bbox, grid._vals.ravel())


def read_sdf_grid(path):
    (nx, ny, nz), bbox, data = _read_grid_file(path, b"SDFG", 1)
    vals = data.reshape(nz, ny, nx).transpose(2, 1, 0)
    return GridField(vals, bbox)


def write_color_grid(path, grid):
    nx, ny, nz = grid.dims
    _write_grid_file(path, b"RGBG", (nx, ny, nz), grid.bbox, grid._vals.ravel())


def read_color_grid(path):
    (nx, ny, nz), bbox, data = _read_grid_file(path, b"RGBG", 3)
    vals = data.reshape(nz, ny, nx, 3).transpose(2, 1, 0, 3)
    return GridColorField(vals, bbox)
