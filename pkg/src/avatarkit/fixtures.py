"""Procedural demo/test asset: a bust (head sphere, neck, torso) with a
painted face, a synthetic iBUG-68 landmark layout on the head, driver
landmark poses (mouth_open, smile, brow_raise, eyes_closed), and a short
animation track. Everything is generated deterministically so tests and
demos can rebuild identical assets anywhere.

Usage: python -m avatarkit.fixtures OUT_DIR [--grid-dim N]
"""

import argparse
import json
import os

import numpy as np

from .camera import CameraPose
from .fields import (CapsuleField, GridColorField, GridField,
                     RoundedBoxField, SmoothUnionField, SphereField,
                     write_color_grid, write_sdf_grid)
from .landmarks import (EXPRESSION_INDICES, LandmarkSet3D, save_driver_landmarks,
                        save_landmarks2d, LandmarkSet2D)

HEAD_CENTER = np.array([0.0, 0.42, 0.0])
HEAD_RADIUS = 0.30
NECK_A = np.array([0.0, 0.02, 0.0])
NECK_B = np.array([0.0, 0.30, 0.0])
NECK_RADIUS = 0.10
TORSO_CENTER = np.array([0.0, -0.28, 0.0])
TORSO_HALF = np.array([0.34, 0.20, 0.14])
TORSO_ROUNDING = 0.06
BLEND = 0.05

Y_HEAD = 0.16
Y_TORSO = 0.02
ALPHA = 0.45

FACE_CENTER = np.array([0.0, 0.44])   # on the head sphere, facing +z
FACE_SCALE = 0.22
DRIVER_SCALE = 0.5

SKIN = (0.96, 0.80, 0.69)
LIP = (0.78, 0.26, 0.30)
EYE_WHITE = (0.95, 0.95, 0.97)
PUPIL = (0.10, 0.10, 0.14)
BROW = (0.25, 0.17, 0.12)
SHIRT = (0.22, 0.28, 0.52)


def bust_field():
    return SmoothUnionField([
        SphereField(HEAD_CENTER, HEAD_RADIUS),
        CapsuleField(NECK_A, NECK_B, NECK_RADIUS),
        RoundedBoxField(TORSO_CENTER, TORSO_HALF, TORSO_ROUNDING),
    ], k=BLEND)


# ---------------------------------------------------------------------------
# Landmark layout
# ---------------------------------------------------------------------------

def face_template():
    """Normalized iBUG-68 layout in face coordinates (x right, y up)."""
    pts = np.zeros((68, 2))
    # jaw 0-16: arc from ear level down to the chin
    x = np.linspace(-0.95, 0.95, 17)
    pts[0:17, 0] = x
    pts[0:17, 1] = 0.20 - 1.25 * (1.0 - (x / 0.95) ** 2) ** 0.8
    # brows 17-21 / 22-26 with a slight arch
    for base, sgn in ((17, -1.0), (22, 1.0)):
        bx = np.linspace(0.18, 0.62, 5) * sgn
        if sgn < 0:
            bx = bx[::-1] * 1.0
            bx = np.linspace(-0.62, -0.18, 5)
        pts[base:base + 5, 0] = bx
        pts[base:base + 5, 1] = 0.52 + 0.06 * np.sin(np.linspace(0, np.pi, 5))
    # nose bridge 27-30, nostril line 31-35
    pts[27:31, 0] = 0.0
    pts[27:31, 1] = np.linspace(0.42, 0.02, 4)
    nx = np.linspace(-0.16, 0.16, 5)
    pts[31:36, 0] = nx
    pts[31:36, 1] = -0.12 - 0.04 * (1.0 - (nx / 0.16) ** 2)
    # eyes 36-41 (right) and 42-47 (left): hexagons
    hexa = np.array([(-1.0, 0.0), (-0.5, 1.0), (0.5, 1.0),
                     (1.0, 0.0), (0.5, -1.0), (-0.5, -1.0)])
    eye = hexa * np.array([0.14, 0.07])
    pts[36:42] = eye + np.array([-0.38, 0.30])
    pts[42:48] = eye + np.array([0.38, 0.30])
    # mouth: outer 48-59 (12 pts), inner 60-67 (8 pts)
    out_ang = np.radians(180.0 - 30.0 * np.arange(12))
    pts[48:60, 0] = 0.32 * np.cos(out_ang)
    pts[48:60, 1] = -0.55 + 0.16 * np.sin(out_ang)
    in_ang = np.radians(180.0 - 45.0 * np.arange(8))
    pts[60:68, 0] = 0.20 * np.cos(in_ang)
    pts[60:68, 1] = -0.55 + 0.075 * np.sin(in_ang)
    return pts


def _on_head_sphere(xy):
    """Lift face-plane points onto the front of the head sphere."""
    xy = np.atleast_2d(xy)
    rho2 = (xy[:, 0] - HEAD_CENTER[0]) ** 2 + (xy[:, 1] - HEAD_CENTER[1]) ** 2
    rho2 = np.minimum(rho2, (0.98 * HEAD_RADIUS) ** 2)
    z = HEAD_CENTER[2] + np.sqrt(HEAD_RADIUS ** 2 - rho2)
    return np.stack([xy[:, 0], xy[:, 1], z], axis=1)


def bust_landmarks3d():
    """Ground-truth 3D landmark positions on the head sphere (all 68)."""
    world_xy = FACE_CENTER + FACE_SCALE * face_template()
    return _on_head_sphere(world_xy)


def bust_front_camera(image_size=(256, 256)):
    return CameraPose.look_at((0.0, 0.09, 2.0), (0.0, 0.09, 0.0),
                              projection="orthographic", half_height=0.85,
                              image_size=image_size)


def bust_landmarks2d(image_size=(256, 256)):
    cam = bust_front_camera(image_size)
    uv, _ = cam.project_points(bust_landmarks3d())
    return LandmarkSet2D(uv, image_size)


# ---------------------------------------------------------------------------
# Painted color field
# ---------------------------------------------------------------------------

def _feature_centers():
    lm3 = bust_landmarks3d()
    mouth = lm3[48:68].mean(axis=0)
    right_eye = lm3[36:42].mean(axis=0)
    left_eye = lm3[42:48].mean(axis=0)
    return mouth, right_eye, left_eye, lm3


def _smooth_mask(d, r, soft):
    return np.clip((r - d) / soft, 0.0, 1.0)


def bust_color_function(pts):
    """Skin with painted lips, eyes, brows, and a shirt below the neck."""
    pts = np.atleast_2d(pts)
    mouth, reye, leye, lm3 = _feature_centers()
    rgb = np.tile(np.array(SKIN), (len(pts), 1))

    shirt_mix = np.clip((0.06 - pts[:, 1]) / 0.05, 0.0, 1.0)
    rgb = rgb * (1 - shirt_mix[:, None]) + np.array(SHIRT) * shirt_mix[:, None]

    def ellip_dist(center, axes):
        return np.linalg.norm((pts - center) / np.asarray(axes), axis=1)

    lips = _smooth_mask(ellip_dist(mouth, (0.085, 0.050, 0.060)), 1.0, 0.25)
    rgb = rgb * (1 - lips[:, None]) + np.array(LIP) * lips[:, None]

    for eye in (reye, leye):
        white = _smooth_mask(ellip_dist(eye, (0.042, 0.028, 0.035)), 1.0, 0.2)
        rgb = rgb * (1 - white[:, None]) + np.array(EYE_WHITE) * white[:, None]
        pupil_c = eye + np.array([0.0, 0.0, 0.02])
        pup = _smooth_mask(ellip_dist(pupil_c, (0.016, 0.016, 0.03)), 1.0, 0.3)
        rgb = rgb * (1 - pup[:, None]) + np.array(PUPIL) * pup[:, None]

    for base in (17, 22):
        seg = lm3[base:base + 5]
        for a, b in zip(seg[:-1], seg[1:]):
            ba = b - a
            h = np.clip(((pts - a) @ ba) / (ba @ ba), 0.0, 1.0)
            d = np.linalg.norm(pts - a - h[:, None] * ba, axis=1)
            m = _smooth_mask(d, 0.018, 0.008)
            rgb = rgb * (1 - m[:, None]) + np.array(BROW) * m[:, None]
    return rgb


# ---------------------------------------------------------------------------
# Driver landmarks
# ---------------------------------------------------------------------------

POSE_DISPLACEMENTS = {
    "mouth_open": {
        48: (-0.02, -0.06), 54: (0.02, -0.06),
        55: (0.0, -0.30), 56: (0.0, -0.34), 57: (0.0, -0.36),
        58: (0.0, -0.34), 59: (0.0, -0.30),
        65: (0.0, -0.28), 66: (0.0, -0.30), 67: (0.0, -0.28),
        50: (0.0, 0.02), 51: (0.0, 0.03), 52: (0.0, 0.02),
    },
    "smile": {
        48: (-0.10, 0.10), 54: (0.10, 0.10),
        49: (-0.05, 0.06), 53: (0.05, 0.06),
        59: (-0.06, 0.05), 55: (0.06, 0.05),
        60: (-0.08, 0.08), 64: (0.08, 0.08),
    },
    "brow_raise": {
        **{i: (0.0, 0.15) for i in range(17, 27)},
        21: (0.0, 0.18), 22: (0.0, 0.18),
    },
    "eyes_closed": {
        37: (0.0, -0.115), 38: (0.0, -0.115),
        43: (0.0, -0.115), 44: (0.0, -0.115),
        40: (0.0, 0.02), 41: (0.0, 0.02),
        46: (0.0, 0.02), 47: (0.0, 0.02),
    },
}


def driver_landmarks():
    """Synthetic human-scale driver: neutral plus named expression poses."""
    tpl = face_template()
    dome = 0.25 * np.sqrt(np.maximum(0.0, 1.3 - (tpl ** 2).sum(axis=1)))
    neutral_pts = np.stack([tpl[:, 0], tpl[:, 1], dome], axis=1) * DRIVER_SCALE
    idx = list(EXPRESSION_INDICES)
    neutral = LandmarkSet3D.from_arrays(idx, neutral_pts[idx], "driver")

    poses = {}
    for name, disp in POSE_DISPLACEMENTS.items():
        moved = neutral_pts.copy()
        for i, (dx, dy) in disp.items():
            moved[i, 0] += dx * DRIVER_SCALE
            moved[i, 1] += dy * DRIVER_SCALE
        poses[name] = LandmarkSet3D.from_arrays(idx, moved[idx], "driver")
    return neutral, poses


# ---------------------------------------------------------------------------
# Track + full fixture bundle
# ---------------------------------------------------------------------------

def default_track(n_frames=10, pose_name="mouth_open", max_yaw_deg=15.0):
    frames = []
    for i in range(n_frames):
        s = i / max(n_frames - 1, 1)
        frames.append({
            "drive": {"pose": pose_name, "w": s},
            "pose": {"head": {"euler": [0.0, max_yaw_deg * s, 0.0]},
                     "torso": {}},
            "camera": None,
        })
    return {"frames": frames}


def make_bust_fixture(out_dir, grid_dim=128, color_dim=96,
                      image_size=(256, 256)):
    """Write the full asset bundle; returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    field = bust_field()
    grid = GridField.from_field(field, (grid_dim,) * 3)
    sdf_path = os.path.join(out_dir, "bust_sdf.sdfg")
    write_sdf_grid(sdf_path, grid)

    color = GridColorField.from_function(bust_color_function,
                                         (color_dim,) * 3, field.bbox)
    color_path = os.path.join(out_dir, "bust_color.rgbg")
    write_color_grid(color_path, color)

    lms2d = bust_landmarks2d(image_size)
    lm_path = os.path.join(out_dir, "bust_landmarks2d.json")
    save_landmarks2d(lm_path, lms2d)

    neutral, poses = driver_landmarks()
    drv_path = os.path.join(out_dir, "bust_driver.json")
    save_driver_landmarks(drv_path, neutral, poses)

    truth_path = os.path.join(out_dir, "bust_landmarks3d_truth.json")
    with open(truth_path, "w", encoding="utf-8") as fh:
        json.dump({str(i): p.tolist()
                   for i, p in enumerate(bust_landmarks3d())}, fh)

    track_path = os.path.join(out_dir, "bust_track.json")
    with open(track_path, "w", encoding="utf-8") as fh:
        json.dump(default_track(), fh, indent=1)

    manifest = {
        "sdf": "bust_sdf.sdfg",
        "color": "bust_color.rgbg",
        "front_camera": bust_front_camera(image_size).to_json(),
        "landmarks2d": "bust_landmarks2d.json",
        "driver_landmarks": "bust_driver.json",
        "y_head": Y_HEAD,
        "y_torso": Y_TORSO,
        "alpha": ALPHA,
    }
    manifest_path = os.path.join(out_dir, "bust_manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
    return manifest_path


def main(argv=None):
    ap = argparse.ArgumentParser(
        description="generate the procedural bust fixture bundle")
    ap.add_argument("out_dir")
    ap.add_argument("--grid-dim", type=int, default=128)
    ap.add_argument("--color-dim", type=int, default=96)
    args = ap.parse_args(argv)
    path = make_bust_fixture(args.out_dir, args.grid_dim, args.color_dim)
    print(path)


if __name__ == "__main__":
    main()
