"""Sphere-traced rendering of (optionally deformed) fields.

Every pixel marches a camera ray through the composed field
f(inverse_deform(p)), stepping by step_scale * max(f, min_step) and hitting
when f <= hit_eps. Grid fields with packable deformations run through the
kernel backend; other field types use a generic numpy marcher. Identical
inputs produce bit-identical images.
"""

import io
import time
from dataclasses import dataclass, field as dc_field

import numpy as np
from PIL import Image as PILImage

from .backend import BACKEND, kernels
from .camera import turntable_cameras
from .errors import ValidationError
from .fields import GridField


@dataclass
class RenderSettings:
    resolution: tuple = (256, 256)
    hit_eps: float = None          # None -> 1e-3 x field bbox diagonal
    max_steps: int = 192
    t_max: float = None            # None -> camera distance + 2 x diagonal
    step_scale: float = 0.5
    shading: str = "headlight"     # "headlight" | "unlit"
    background: tuple = (0, 0, 0, 0)
    supersample: bool = False

    def __post_init__(self):
        w, h = self.resolution
        if w < 1 or h < 1:
            raise ValidationError("resolution must be positive")
        self.resolution = (int(w), int(h))
        if not (0.0 < self.step_scale <= 1.0):
            raise ValidationError("step_scale must be in (0, 1]")
        if self.max_steps < 16:
            raise ValidationError("max_steps must be >= 16")
        if self.hit_eps is not None and self.hit_eps <= 0:
            raise ValidationError("hit_eps must be positive")
        if self.shading not in ("headlight", "unlit"):
            raise ValidationError(f"unknown shading {self.shading!r}")
        if len(self.background) != 4:
            raise ValidationError("background must be RGBA")
        self.background = tuple(int(c) for c in self.background)

    def resolve(self, field, camera):
        """Fill eps/t_max defaults from the field and camera geometry."""
        diag = field.bbox_diag
        eps = self.hit_eps if self.hit_eps is not None else 1e-3 * diag
        if self.t_max is not None:
            t_max = self.t_max
        else:
            center = 0.5 * (np.asarray(field.bbox[0]) + np.asarray(field.bbox[1]))
            t_max = float(np.linalg.norm(camera.position - center) + 2.0 * diag)
        return eps, t_max


@dataclass
class Image:
    width: int
    height: int
    pixels: np.ndarray  # (h, w, 4) uint8, row-major, top-left origin
    diagnostics: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.pixels.shape != (self.height, self.width, 4):
            raise ValidationError("pixel buffer must be (h, w, 4)")

    def to_png_bytes(self):
        buf = io.BytesIO()
        PILImage.fromarray(self.pixels, "RGBA").save(buf, format="PNG")
        return buf.getvalue()

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_png_bytes())

    @classmethod
    def from_png_bytes(cls, data):
        arr = np.array(PILImage.open(io.BytesIO(data)).convert("RGBA"))
        h, w = arr.shape[:2]
        return cls(w, h, arr)


def _march_generic(field, deform, origins, dirs, t_max, hit_eps, min_step,
                   lam, max_steps, normal_h):
    """Numpy marcher for arbitrary field backends/deformations."""
    n = len(origins)
    t = np.zeros(n)
    hit = np.zeros(n, dtype=bool)
    alive = np.ones(n, dtype=bool)

    def composed(pts):
        q = pts if deform is None else deform.inverse(pts)
        return field.sample(q), q

    for _ in range(max_steps):
        idx = np.nonzero(alive)[0]
        if len(idx) == 0:
            break
        p = origins[idx] + dirs[idx] * t[idx, None]
        f, _ = composed(p)
        now = f <= hit_eps
        hit[idx[now]] = True
        alive[idx[now]] = False
        adv = idx[~now]
        t[adv] += lam * np.maximum(f[~now], min_step)
        alive[adv[t[adv] > t_max]] = False
    steps_exhausted = int(alive.sum())

    point = origins + dirs * t[:, None]
    canon = point.copy()
    normal = np.zeros((n, 3))
    hidx = np.nonzero(hit)[0]
    if len(hidx):
        ph = point[hidx]
        _, canon[hidx] = composed(ph)
        grad = np.empty((len(hidx), 3))
        for ax in range(3):
            off = np.zeros(3)
            off[ax] = normal_h
            grad[:, ax] = composed(ph + off)[0] - composed(ph - off)[0]
        norm = np.linalg.norm(grad, axis=1)
        ok = norm > 1e-12
        grad[ok] /= norm[ok, None]
        grad[~ok] = (0.0, 0.0, 1.0)
        normal[hidx] = grad
    return {"hit": hit, "t": t, "point": point, "canon": canon,
            "normal": normal, "steps_exhausted": steps_exhausted,
            "region_counts": np.zeros(3, dtype=np.int64)}


def render(field, color, deform, camera, settings):
    """Render one frame. `deform` may be None or a CompositeDeform."""
    t0 = time.perf_counter()
    w, h = settings.resolution
    eps, t_max = settings.resolve(field, camera)
    min_step = eps
    normal_h = field.normal_step

    ss = 2 if settings.supersample else 1
    origins, dirs = camera.all_pixel_rays((w, h), supersample=ss)

    use_kernel = isinstance(field, GridField)
    pack = None
    if deform is not None and not deform.is_identity:
        if use_kernel and hasattr(deform, "kernel_pack"):
            pack = deform.kernel_pack()
        else:
            use_kernel = False
    else:
        deform = None

    if use_kernel:
        res = kernels.march_rays(
            origins, dirs, t_max, eps, min_step, settings.step_scale,
            settings.max_steps, normal_h, field._vals,
            np.asarray(field.bbox[0], float), np.asarray(field.bbox[1], float),
            field.boundary_min, pack)
    else:
        res = _march_generic(field, deform, origins, dirs, t_max, eps,
                             min_step, settings.step_scale,
                             settings.max_steps, normal_h)

    n_pix = w * h
    shaded = np.zeros((ss * ss, n_pix, 3))
    hits = res["hit"].reshape(ss * ss, n_pix)
    if res["hit"].any():
        idx = np.nonzero(res["hit"])[0]
        rgb = color.sample_rgb(res["canon"][idx])
        if settings.shading == "headlight":
            view = -dirs[idx]
            lambert = np.einsum("ij,ij->i", res["normal"][idx], view)
            factor = 0.5 + 0.5 * np.maximum(lambert, 0.0)
            rgb = rgb * factor[:, None]
        flat = shaded.reshape(ss * ss * n_pix, 3)
        flat[idx] = np.clip(rgb, 0.0, 1.0)

    bg = np.array(settings.background, dtype=np.float64)
    any_hit = hits.any(axis=0)
    cover = hits.mean(axis=0)
    rgb_mean = np.zeros((n_pix, 3))
    nh = hits.sum(axis=0)
    nz = nh > 0
    rgb_mean[nz] = shaded.sum(axis=0)[nz] / nh[nz, None]
    # blend hit color with background color by subpixel coverage
    rgb_out = np.where(any_hit[:, None],
                       rgb_mean * cover[:, None]
                       + (bg[:3] / 255.0) * (1.0 - cover[:, None]),
                       bg[:3] / 255.0)
    alpha = np.where(any_hit, 255, bg[3])

    pixels = np.empty((n_pix, 4), dtype=np.uint8)
    pixels[:, :3] = np.floor(rgb_out * 255.0 + 0.5).astype(np.uint8)
    pixels[:, 3] = alpha.astype(np.uint8)
    img = Image(w, h, pixels.reshape(h, w, 4))
    rc = res["region_counts"]
    img.diagnostics = {
        "backend": BACKEND,
        "steps_exhausted": int(res["steps_exhausted"]),
        "regions": {"head": int(rc[0]), "torso": int(rc[1]),
                    "neck": int(rc[2])},
        "render_seconds": time.perf_counter() - t0,
        "hit_pixels": int(any_hit.sum()),
    }
    if deform is not None:
        img.diagnostics["deform"] = deform.diagnostics()
    return img


def render_turntable(field, color, deform, base_camera, center, n_views,
                     settings):
    """Views at equal azimuth increments about the vertical axis through
    `center`; view 0 uses `base_camera` unchanged."""
    cams = turntable_cameras(base_camera, center, n_views)
    return [render(field, color, deform, cam, settings) for cam in cams]


def contact_sheet(images, columns=None):
    """Tile images (all the same size) into one sheet."""
    if not images:
        raise ValidationError("no images to tile")
    columns = columns or len(images)
    rows = (len(images) + columns - 1) // columns
    w, h = images[0].width, images[0].height
    sheet = np.zeros((rows * h, columns * w, 4), dtype=np.uint8)
    for k, img in enumerate(images):
        r, c = divmod(k, columns)
        sheet[r * h:(r + 1) * h, c * w:(c + 1) * w] = img.pixels
    return Image(columns * w, rows * h, sheet)
