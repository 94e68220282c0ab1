"""Small vector, rotation, and bounding-box helpers."""

import numpy as np

from .errors import ValidationError


def unit(v):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n < 1e-300:
        raise ValidationError("cannot normalize a zero vector")
    return v / n


def rotation_about_axis(axis, angle_rad):
    """Rodrigues rotation matrix about a (not necessarily unit) axis."""
    a = unit(axis)
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    k = np.array([[0.0, -a[2], a[1]],
                  [a[2], 0.0, -a[0]],
                  [-a[1], a[0], 0.0]])
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


def euler_xyz_deg(rx, ry, rz):
    """Rotation from extrinsic x, y, z Euler angles in degrees (R = Rz Ry Rx)."""
    rx, ry, rz = np.radians([rx, ry, rz])
    cx, sx = np.cos(rx), np.sin(rx)
    cy, sy = np.cos(ry), np.sin(ry)
    cz, sz = np.cos(rz), np.sin(rz)
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


def minimal_rotation_to_z(n):
    """Smallest rotation R with R @ n = +z (axis n x z).

    For n within 1e-9 of -z the rotation is 180 degrees about x.
    """
    n = np.asarray(n, dtype=float)
    e_z = np.array([0.0, 0.0, 1.0])
    c = float(n @ e_z)
    if c < -1.0 + 1e-9:
        return np.diag([1.0, -1.0, -1.0])
    w = np.cross(n, e_z)
    s2 = float(w @ w)
    if s2 < 1e-24:
        return np.eye(3)
    k = np.array([[0.0, -w[2], w[1]],
                  [w[2], 0.0, -w[0]],
                  [-w[1], w[0], 0.0]])
    return np.eye(3) + k + k @ k * ((1.0 - c) / s2)


def is_rotation(R, tol=1e-9):
    R = np.asarray(R, dtype=float)
    return (R.shape == (3, 3)
            and np.allclose(R.T @ R, np.eye(3), atol=tol)
            and np.linalg.det(R) > 0)


def bbox_diagonal(bbox):
    bmin, bmax = bbox
    return float(np.linalg.norm(np.asarray(bmax, float) - np.asarray(bmin, float)))


def inflate_bbox(bbox, factor):
    """Scale a bbox about its center by `factor`."""
    bmin = np.asarray(bbox[0], dtype=float)
    bmax = np.asarray(bbox[1], dtype=float)
    c = 0.5 * (bmin + bmax)
    h = 0.5 * (bmax - bmin) * factor
    return c - h, c + h


def bbox_corners(bbox):
    bmin, bmax = (np.asarray(b, dtype=float) for b in bbox)
    xs = [bmin[0], bmax[0]]
    ys = [bmin[1], bmax[1]]
    zs = [bmin[2], bmax[2]]
    return np.array([[x, y, z] for x in xs for y in ys for z in zs])


def union_bbox(bboxes):
    mins = np.min([np.asarray(b[0], float) for b in bboxes], axis=0)
    maxs = np.max([np.asarray(b[1], float) for b in bboxes], axis=0)
    return mins, maxs
