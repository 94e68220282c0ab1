"""68-point facial landmark schema, six-part grouping, 2D->3D projection
onto the SDF surface, and front-axis augmentation of control points."""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ProjectionIncompleteError, ValidationError
from .fields import Ray, ray_surface_intersection

# iBUG-68 index ranges. The jaw contour (0-16) is excluded from expression
# work, leaving the 51 expression landmarks.
JAW = tuple(range(0, 17))
PART_INDICES = {
    "right_brow": tuple(range(17, 22)),
    "left_brow": tuple(range(22, 27)),
    "nose": tuple(range(27, 36)),
    "right_eye": tuple(range(36, 42)),
    "left_eye": tuple(range(42, 48)),
    "mouth": tuple(range(48, 68)),
}
EXPRESSION_INDICES = tuple(i for part in PART_INDICES.values() for i in part)
PART_NAMES = tuple(PART_INDICES)


@dataclass
class FacialPartition:
    parts: dict
    orientation_subsets: dict

    def __post_init__(self):
        seen = set()
        for name, idx in self.parts.items():
            if seen & set(idx):
                raise ValidationError(f"part {name!r} overlaps another part")
            seen |= set(idx)
            sub = self.orientation_subsets.get(name, idx)
            if not set(sub) <= set(idx):
                raise ValidationError(
                    f"orientation subset of {name!r} not within the part")
            if len(sub) < 3:
                raise ValidationError(
                    f"orientation subset of {name!r} needs >= 3 landmarks")
        if seen != set(EXPRESSION_INDICES):
            raise ValidationError("parts must cover exactly the 51 "
                                  "expression indices")


def partition_ibug68(orientation_subsets=None):
    """Canonical six-part partition; orientation subsets default to the
    whole part."""
    parts = {k: list(v) for k, v in PART_INDICES.items()}
    subsets = {k: list(v) for k, v in PART_INDICES.items()}
    if orientation_subsets:
        subsets.update({k: list(v) for k, v in orientation_subsets.items()})
    return FacialPartition(parts, subsets)


@dataclass
class LandmarkSet2D:
    points: np.ndarray           # (68, 2) pixel coordinates
    image_size: tuple

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.shape != (68, 2):
            raise ValidationError(
                f"expected 68 2D landmarks, got shape {self.points.shape}")
        w, h = self.image_size
        if (self.points < 0).any() or (self.points[:, 0] >= w).any() \
                or (self.points[:, 1] >= h).any():
            raise ValidationError("2D landmarks fall outside the image")
        self.image_size = (int(w), int(h))


@dataclass
class LandmarkSet3D:
    points: dict                 # landmark index -> (3,) array
    provenance: str = "projected"
    fallback_indices: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        clean = {}
        for k, v in self.points.items():
            v = np.asarray(v, dtype=float)
            if v.shape != (3,) or not np.isfinite(v).all():
                raise ValidationError(f"landmark {k}: bad 3D point {v}")
            clean[int(k)] = v
        self.points = clean

    def indices(self):
        return sorted(self.points)

    def as_array(self, indices=None):
        idx = self.indices() if indices is None else list(indices)
        return np.array([self.points[i] for i in idx])

    def require_expression_indices(self):
        missing = set(EXPRESSION_INDICES) - set(self.points)
        if missing:
            raise ValidationError(
                f"landmark set lacks expression indices {sorted(missing)}")

    def subset(self, indices):
        return self.as_array(indices)

    @classmethod
    def from_arrays(cls, indices, pts, provenance="projected"):
        return cls({int(i): p for i, p in zip(indices, pts)}, provenance)


def load_landmarks2d(path):
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    try:
        return LandmarkSet2D(np.array(obj["points"], dtype=float),
                             tuple(obj["image_size"]))
    except KeyError as exc:
        raise ValidationError(f"{path}: landmark JSON missing {exc}") from exc


def save_landmarks2d(path, lms):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"image_size": list(lms.image_size),
                   "points": np.asarray(lms.points).tolist()}, fh)


def _parse_indexed_points(obj, provenance):
    return LandmarkSet3D({int(k): np.asarray(v, dtype=float)
                          for k, v in obj.items()}, provenance)


def load_driver_landmarks(path):
    """Driver file: {"neutral": {index: [x,y,z]}, "poses": {name: {...}}}."""
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    try:
        neutral = _parse_indexed_points(obj["neutral"], "driver")
        poses = {name: _parse_indexed_points(p, "driver")
                 for name, p in obj["poses"].items()}
    except KeyError as exc:
        raise ValidationError(f"{path}: driver JSON missing {exc}") from exc
    neutral.require_expression_indices()
    for name, p in poses.items():
        if set(p.points) != set(neutral.points):
            raise ValidationError(
                f"{path}: driver pose {name!r} indices differ from neutral")
    return neutral, poses


def save_driver_landmarks(path, neutral, poses):
    def enc(lms):
        return {str(i): lms.points[i].tolist() for i in lms.indices()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"neutral": enc(neutral),
                   "poses": {k: enc(v) for k, v in poses.items()}}, fh)


# ---------------------------------------------------------------------------
# Projection onto the surface
# ---------------------------------------------------------------------------

def project_landmarks(field, cam, lms2d, eps, t_max=None, indices=None):
    """Cast pixel-center rays for the expression landmarks and intersect the
    surface. Raises ProjectionIncompleteError when any required landmark
    misses (even via the dense-argmin fallback)."""
    if tuple(cam.image_size) != tuple(lms2d.image_size):
        raise ValidationError(
            f"camera image size {cam.image_size} does not match landmark "
            f"image size {lms2d.image_size}")
    if t_max is None:
        t_max = float(np.linalg.norm(cam.position) + 2.0 * field.bbox_diag
                      + np.linalg.norm(np.asarray(field.bbox[0]))
                      + np.linalg.norm(np.asarray(field.bbox[1])))
    idx = list(EXPRESSION_INDICES) if indices is None else list(indices)
    origins, dirs = cam.pixel_rays(lms2d.points[idx])

    points, missing, fallback = {}, [], set()
    for i, o, v in zip(idx, origins, dirs):
        hit = ray_surface_intersection(field, Ray(o, v), t_max, eps)
        if hit is None:
            missing.append(i)
        else:
            points[i] = hit.point
            if hit.used_fallback:
                fallback.add(i)
    if missing:
        raise ProjectionIncompleteError(missing)
    out = LandmarkSet3D(points, "projected")
    out.fallback_indices = frozenset(fallback)
    return out


# ---------------------------------------------------------------------------
# Front-axis augmentation
# ---------------------------------------------------------------------------

@dataclass
class AugmentedLandmarks:
    base: LandmarkSet3D
    alpha: float
    front_axis: np.ndarray
    plus_points: dict
    minus_points: dict

    def indices(self):
        return self.base.indices()

    def control_points(self):
        """Flattened control array: all bases, then +offsets, then -offsets,
        each block in ascending landmark-index order."""
        idx = self.indices()
        return np.concatenate([
            self.base.as_array(idx),
            np.array([self.plus_points[i] for i in idx]),
            np.array([self.minus_points[i] for i in idx]),
        ])


def augment_landmarks(lms, alpha, front_axis):
    """Add copies of every landmark offset +-alpha along the front axis."""
    if alpha <= 0:
        raise ValidationError("augmentation distance alpha must be > 0")
    axis = np.asarray(front_axis, dtype=float)
    n = np.linalg.norm(axis)
    if abs(n - 1.0) > 1e-6:
        raise ValidationError("front_axis must be a unit vector")
    off = alpha * axis
    plus = {i: lms.points[i] + off for i in lms.indices()}
    minus = {i: lms.points[i] - off for i in lms.indices()}
    return AugmentedLandmarks(lms, float(alpha), axis, plus, minus)
