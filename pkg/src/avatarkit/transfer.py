"""Per-part motion transfer from driver to avatar landmarks.

Each facial part gets an orientation normal (least-squares perpendicular to
all intra-part chords), a part frame aligning that normal to +z, and a
bounding-box scale. Driver displacements map through

    u_src = R_src^T  A_src^-1  A_drv  R_drv  u_drv

which is the exact minimizer of || A_drv R_drv u_drv - A_src R_src u_src ||^2
per landmark.

The part frame uses the full principal basis (normal to z, in-plane
principal directions to x/y with deterministic signs), which makes extents
and the transfer invariant to rigid rotations of the input whenever no
eigenvector sign flips; the bare minimal rotation cannot provide that.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePartError, ValidationError
from .landmarks import LandmarkSet3D

DEFAULT_FRONT_AXIS = np.array([0.0, 0.0, 1.0])
COLLINEAR_REL_TOL = 1e-9


def _pairwise_scatter(points):
    c = points.mean(axis=0)
    d = points - c
    return d.T @ d  # pairwise-difference scatter = 2N * this, same eigvecs


def _signed(v, reference):
    """Flip v so v . reference >= 0; exact-zero ties fall back to the
    z >= 0, then y, then x rule."""
    dot = float(v @ reference)
    if dot > 0:
        return v
    if dot < 0:
        return -v
    for comp in (2, 1, 0):
        if v[comp] > 0:
            return v
        if v[comp] < 0:
            return -v
    return v


def _sign_by_dominant(v):
    """Flip v so its largest-magnitude component is positive."""
    k = int(np.argmax(np.abs(v)))
    return -v if v[k] < 0 else v


def part_orientation(points, front_axis=DEFAULT_FRONT_AXIS, part=""):
    """Unit normal minimizing the summed squared projections of all
    landmark-pair chords: the smallest-eigenvalue eigenvector of the chord
    scatter matrix. Sign chosen so n . front_axis >= 0."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if len(points) < 3:
        raise DegeneratePartError(part or "<anon>", "needs >= 3 landmarks")
    w, V = np.linalg.eigh(_pairwise_scatter(points))
    scale = max(w[2], 1e-300)
    if w[1] < COLLINEAR_REL_TOL * scale:
        raise DegeneratePartError(part or "<anon>",
                                  "landmarks are collinear")
    return _signed(V[:, 0], np.asarray(front_axis, dtype=float))


def align_rotation(n):
    """Minimal rotation (axis n x z) taking n to +z; n near -z maps to a
    180-degree rotation about x."""
    n = np.asarray(n, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > 1e-6:
        raise ValidationError("orientation vector must be unit length")
    from .mathutil import minimal_rotation_to_z
    return minimal_rotation_to_z(n)


@dataclass
class PartFrame:
    part: str
    n: np.ndarray          # orientation normal (rows z of R)
    R: np.ndarray          # rotation, rows = part axes (maps n to +z)
    extents: np.ndarray    # aligned bbox sizes, clamped by extent_floor
    A: np.ndarray          # diag entries 1 / extents


def part_frame(points, front_axis=DEFAULT_FRONT_AXIS, extent_floor=1e-6,
               orientation_points=None, part=""):
    """Orientation + rotation + aligned bounding-box scale of one part."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    sub = points if orientation_points is None else \
        np.atleast_2d(np.asarray(orientation_points, dtype=float))
    n = part_orientation(sub, front_axis, part=part)

    # in-plane principal directions of the part, orthogonal to n
    c = points.mean(axis=0)
    d = points - c
    d_perp = d - np.outer(d @ n, n)
    w, V = np.linalg.eigh(d_perp.T @ d_perp)
    x = _sign_by_dominant(V[:, 2])
    x = x - (x @ n) * n  # guard against numerical drift off the plane
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        raise DegeneratePartError(part or "<anon>",
                                  "no usable in-plane direction")
    x /= nx
    y = np.cross(n, x)
    R = np.stack([x, y, n])

    aligned = points @ R.T
    extents = aligned.max(axis=0) - aligned.min(axis=0)
    extents = np.maximum(extents, extent_floor)
    return PartFrame(part, n, R, extents, 1.0 / extents)


@dataclass
class ExpressionDrive:
    driver_neutral: LandmarkSet3D
    driver_expressive: LandmarkSet3D

    def __post_init__(self):
        if set(self.driver_neutral.points) != set(self.driver_expressive.points):
            raise ValidationError(
                "driver neutral/expressive landmark indices differ")

    def displacement(self, index):
        return (self.driver_expressive.points[index]
                - self.driver_neutral.points[index])


def part_frames_for(lms, partition, front_axis, extent_floor, side=""):
    frames = {}
    for name, idx in partition.parts.items():
        label = f"{name}{side}"
        sub_idx = partition.orientation_subsets.get(name, idx)
        frames[name] = part_frame(
            lms.as_array(idx), front_axis, extent_floor,
            orientation_points=lms.as_array(sub_idx), part=label)
    return frames


def default_extent_floor(points):
    """1e-4 of the landmark-cloud bbox diagonal."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    diag = np.linalg.norm(points.max(axis=0) - points.min(axis=0))
    return max(1e-4 * diag, 1e-12)


def transfer_displacements(src_neutral, drive, partition,
                           front_axes=(DEFAULT_FRONT_AXIS, DEFAULT_FRONT_AXIS),
                           extent_floors=None, src_frames=None):
    """Apply driver landmark motion to the source landmarks, per part.

    Returns the deformed source landmark set. Zero driver motion maps to
    exactly zero source motion.
    """
    src_neutral.require_expression_indices()
    drive.driver_neutral.require_expression_indices()
    src_axis, drv_axis = front_axes
    if extent_floors is None:
        extent_floors = (default_extent_floor(src_neutral.as_array()),
                         default_extent_floor(drive.driver_neutral.as_array()))
    src_floor, drv_floor = extent_floors

    if src_frames is None:
        src_frames = part_frames_for(src_neutral, partition, src_axis,
                                     src_floor, side=" (source)")
    drv_frames = part_frames_for(drive.driver_neutral, partition, drv_axis,
                                 drv_floor, side=" (driver)")

    out = {}
    for name, idx in partition.parts.items():
        fs, fd = src_frames[name], drv_frames[name]
        # R_s^T diag(ext_s) diag(1/ext_d) R_d
        M = fs.R.T @ np.diag(fs.extents) @ np.diag(fd.A) @ fd.R
        u_d = (drive.driver_expressive.as_array(idx)
               - drive.driver_neutral.as_array(idx))
        u_s = u_d @ M.T
        base = src_neutral.as_array(idx)
        for i, k in enumerate(idx):
            out[k] = base[i] + u_s[i]
    return LandmarkSet3D(out, "deformed")
