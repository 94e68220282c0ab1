"""Cameras: pixel-center rays, point projection, and orbiting.

Pixel convention: (u, v) with u rightward, v downward, top-left origin;
pixel centers at (u + 0.5, v + 0.5). The camera basis is right/up/forward
(camera-to-world), orthonormal with det +1.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .mathutil import rotation_about_axis, unit

WORLD_UP = np.array([0.0, 1.0, 0.0])


@dataclass
class CameraPose:
    position: np.ndarray
    right: np.ndarray
    up: np.ndarray
    forward: np.ndarray
    projection: str              # "orthographic" | "perspective"
    half_height: float = 1.0     # orthographic half height (world units)
    fov_y: float = math.radians(45.0)  # perspective vertical FOV (radians)
    image_size: tuple = (256, 256)

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.right = np.asarray(self.right, dtype=float)
        self.up = np.asarray(self.up, dtype=float)
        self.forward = np.asarray(self.forward, dtype=float)
        if self.projection not in ("orthographic", "perspective"):
            raise ValidationError(f"unknown projection {self.projection!r}")
        R = np.stack([self.right, self.up, self.forward])
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-9):
            raise ValidationError("camera basis is not orthonormal")
        if np.linalg.det(R) < 0:
            raise ValidationError("camera basis is left-handed")
        w, h = self.image_size
        if w < 1 or h < 1:
            raise ValidationError("image_size must be positive")
        self.image_size = (int(w), int(h))

    # -- constructors -------------------------------------------------------

    @classmethod
    def look_at(cls, position, target, up=WORLD_UP, projection="orthographic",
                half_height=1.0, fov_y_deg=45.0, image_size=(256, 256)):
        position = np.asarray(position, dtype=float)
        forward = unit(np.asarray(target, dtype=float) - position)
        right = np.cross(forward, np.asarray(up, dtype=float))
        if np.linalg.norm(right) < 1e-12:
            right = np.cross(forward, np.array([1.0, 0.0, 0.0]))
        right = unit(right)
        true_up = np.cross(right, forward)
        return cls(position, right, true_up, forward, projection,
                   half_height=half_height, fov_y=math.radians(fov_y_deg),
                   image_size=image_size)

    @classmethod
    def from_json(cls, obj):
        try:
            proj = obj["projection"]
            kind = proj["type"]
            if kind == "orthographic":
                extra = {"projection": "orthographic",
                         "half_height": float(proj["half_height"])}
            elif kind == "perspective":
                extra = {"projection": "perspective",
                         "fov_y_deg": float(proj["fov_y_deg"])}
            else:
                raise ValidationError(f"unknown projection type {kind!r}")
            return cls.look_at(
                obj["position"], obj["look_at"],
                up=obj.get("up", WORLD_UP),
                image_size=tuple(obj["image_size"]),
                **extra)
        except KeyError as exc:
            raise ValidationError(f"camera JSON missing field {exc}") from exc

    def to_json(self):
        proj = ({"type": "orthographic", "half_height": self.half_height}
                if self.projection == "orthographic"
                else {"type": "perspective",
                      "fov_y_deg": math.degrees(self.fov_y)})
        # serialize via a look-at point one unit ahead
        return {"position": self.position.tolist(),
                "look_at": (self.position + self.forward).tolist(),
                "up": self.up.tolist(),
                "projection": proj,
                "image_size": list(self.image_size)}

    # -- geometry -----------------------------------------------------------

    @property
    def aspect(self):
        w, h = self.image_size
        return w / h

    @property
    def half_width(self):
        return self.half_height * self.aspect

    def _ndc(self, uv):
        w, h = self.image_size
        x = (uv[:, 0] + 0.5) * (2.0 / w) - 1.0
        y = 1.0 - (uv[:, 1] + 0.5) * (2.0 / h)
        return x, y

    def pixel_rays(self, uv):
        """Rays through pixel centers for (N,2) pixel coordinates."""
        uv = np.atleast_2d(np.asarray(uv, dtype=float))
        x, y = self._ndc(uv)
        if self.projection == "orthographic":
            origins = (self.position
                       + x[:, None] * (self.half_width * self.right)
                       + y[:, None] * (self.half_height * self.up))
            dirs = np.tile(self.forward, (len(uv), 1))
        else:
            t = math.tan(self.fov_y / 2.0)
            d = (self.forward
                 + x[:, None] * (t * self.aspect * self.right)
                 + y[:, None] * (t * self.up))
            dirs = d / np.linalg.norm(d, axis=1, keepdims=True)
            origins = np.tile(self.position, (len(uv), 1))
        return origins, dirs

    def all_pixel_rays(self, resolution=None, supersample=1):
        """Rays for every pixel of `resolution` (row-major), optionally
        with an s x s subpixel grid per pixel."""
        w, h = resolution or self.image_size
        s = int(supersample)
        n = s * max(1, s)
        if s <= 1:
            us, vs = np.meshgrid(np.arange(w, dtype=float),
                                 np.arange(h, dtype=float))
            uv = np.stack([us.ravel(), vs.ravel()], axis=1)
        else:
            sub = (np.arange(s) + 0.5) / s - 0.5
            us, vs = np.meshgrid(np.arange(w, dtype=float),
                                 np.arange(h, dtype=float))
            uv = []
            for dv in sub:
                for du in sub:
                    uv.append(np.stack([(us + du).ravel(), (vs + dv).ravel()],
                                       axis=1))
            uv = np.concatenate(uv, axis=0)
        cam = self
        if resolution is not None and tuple(resolution) != self.image_size:
            cam = self.with_image_size(tuple(resolution))
        return cam.pixel_rays(uv)

    def with_image_size(self, image_size):
        return CameraPose(self.position, self.right, self.up, self.forward,
                          self.projection, half_height=self.half_height,
                          fov_y=self.fov_y, image_size=tuple(image_size))

    def project_points(self, pts):
        """World points -> (N,2) pixel coordinates (+ validity mask)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        d = pts - self.position
        w, h = self.image_size
        if self.projection == "orthographic":
            x = (d @ self.right) / self.half_width
            y = (d @ self.up) / self.half_height
            valid = np.ones(len(pts), dtype=bool)
        else:
            z = d @ self.forward
            valid = z > 1e-12
            zs = np.where(valid, z, 1.0)
            t = math.tan(self.fov_y / 2.0)
            x = (d @ self.right) / (zs * t * self.aspect)
            y = (d @ self.up) / (zs * t)
        u = (x + 1.0) * (w / 2.0) - 0.5
        v = (1.0 - y) * (h / 2.0) - 0.5
        return np.stack([u, v], axis=1), valid


def orbit_camera(base, center, azimuth_deg=0.0, elevation_deg=0.0,
                 distance=None):
    """Rotate a camera about `center`: azimuth about world up, elevation
    about the camera's right axis. Zero angles and default distance return
    `base` unchanged (exactly)."""
    center = np.asarray(center, dtype=float)
    if azimuth_deg == 0.0 and elevation_deg == 0.0 and distance is None:
        return base
    offset = base.position - center
    r0 = np.linalg.norm(offset)
    if r0 < 1e-12:
        raise ValidationError("camera position coincides with orbit center")
    r = r0 if distance is None else float(distance)
    if r <= 0:
        raise ValidationError("orbit distance must be positive")

    rot = rotation_about_axis(WORLD_UP, math.radians(azimuth_deg))
    if elevation_deg != 0.0:
        right_axis = rot @ base.right
        rot = rotation_about_axis(right_axis, math.radians(-elevation_deg)) @ rot
    new_offset = rot @ (offset * (r / r0))
    position = center + new_offset
    return CameraPose.look_at(
        position, center, up=WORLD_UP, projection=base.projection,
        half_height=base.half_height, fov_y_deg=math.degrees(base.fov_y),
        image_size=base.image_size)


def turntable_cameras(base, center, n_views):
    """Equal-azimuth cameras about the vertical axis; view 0 is `base`."""
    if n_views < 1:
        raise ValidationError("n_views must be >= 1")
    return [base if i == 0 else
            orbit_camera(base, center, azimuth_deg=360.0 * i / n_views)
            for i in range(n_views)]
