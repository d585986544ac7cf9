"""Schematic face generator for desk-scale training and verification.

Every face is a deterministic function of its seed: feature geometry (ellipse
eyes, parabolic brows/lips, nose lines, face ellipse) is sampled in a unit
face frame, landmarks are read off the same parametric curves that get
rasterized, and one affine placement maps both the polygons and the landmark
coordinates into the image, so rendered shapes and annotations correspond
exactly by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import AnnotatedSample
from .imageops import affine_about, fill_polygon_mask, to_uint8, transform_points
from .layout import _arc, _ellipse_ring, get_layout

RING_ANGLES = (180, 135, 90, 45, 0, -45, -90, -135)


@dataclass(frozen=True)
class SyntheticFaceParams:
    seed: int = 0
    image_size: int = 128
    layout_name: str = "synth65"
    noise_level: float = 0.02          # additive noise, fraction of full scale
    center_jitter: float = 0.05        # face center wobble, fraction of image
    face_scale: tuple[float, float] = (0.62, 0.80)  # face box, fraction of image
    rotation_deg: float = 10.0
    feature_jitter: float = 0.012      # unit-frame wiggle of feature anchors
    brightness_jitter: float = 0.08


def _jit(rng, amount):
    return float(rng.uniform(-amount, amount))


class _Geometry:
    """Feature curve parameters in the unit face frame."""

    def __init__(self, rng: np.random.Generator, j: float):
        self.face_center = (0.5 + _jit(rng, j), 0.52 + _jit(rng, j))
        self.face_axes = (0.38 * (1 + _jit(rng, 2 * j)), 0.46 * (1 + _jit(rng, 2 * j)))
        dy = _jit(rng, j)
        self.eye_y = 0.42 + dy
        self.eye_dx = 0.165 * (1 + _jit(rng, 2 * j))
        self.eye_axes = (0.075 * (1 + _jit(rng, 2 * j)), 0.042 * (1 + _jit(rng, 2 * j)))
        self.brow_y = (0.315 + dy + _jit(rng, j), 0.275 + dy + _jit(rng, j))
        self.brow_x = (0.20 + _jit(rng, j), 0.45 + _jit(rng, j))
        self.nose_top = 0.42 + dy
        self.nose_tip_y = 0.585 + _jit(rng, j)
        self.nose_half = 0.07 * (1 + _jit(rng, 2 * j))
        self.mouth_y = 0.73 + _jit(rng, j)
        self.mouth_half = 0.155 * (1 + _jit(rng, 2 * j))
        self.lip_up = 0.035 * (1 + _jit(rng, 2 * j))
        self.lip_down = 0.05 * (1 + _jit(rng, 2 * j))

    # each feature exposes (sparse landmark points, dense outline points)

    def brow(self, side: str, n: int = 8, dense: int = 20):
        x0, x1 = self.brow_x
        if side == "right":
            x0, x1 = 1.0 - x1, 1.0 - x0
        y_end, y_peak = self.brow_y
        return (np.array(_arc(x0, x1, y_end, y_peak, n)),
                np.array(_arc(x0, x1, y_end, y_peak, dense)))

    def eye_center(self, side: str):
        cx = 0.5 - self.eye_dx if side == "left" else 0.5 + self.eye_dx
        return (cx, self.eye_y)

    def eye(self, side: str, dense: int = 24):
        cx, cy = self.eye_center(side)
        ax, ay = self.eye_axes
        sparse = np.array(_ellipse_ring(cx, cy, ax, ay, RING_ANGLES))
        angles = np.linspace(0, 360, dense, endpoint=False)
        return sparse, np.array(_ellipse_ring(cx, cy, ax, ay, angles))

    def nose(self):
        bridge = np.array([(0.5, y) for y in np.linspace(self.nose_top,
                                                         self.nose_tip_y - 0.03, 4)])
        tip = np.array([(0.5, self.nose_tip_y)])
        x0, x1 = 0.5 - self.nose_half, 0.5 + self.nose_half
        y = self.nose_tip_y + 0.015
        base_sparse = np.array(_arc(x0, x1, y, y + 0.025, 5))
        base_dense = np.array(_arc(x0, x1, y, y + 0.025, 15))
        return bridge, tip, base_sparse, base_dense

    def lips(self):
        x0, x1 = 0.5 - self.mouth_half, 0.5 + self.mouth_half
        y = self.mouth_y
        outer_up = _arc(x0, x1, y, y - self.lip_up, 7)
        outer_dn = _arc(x0, x1, y, y + self.lip_down, 7)
        xi0, xi1 = 0.5 - self.mouth_half * 0.71, 0.5 + self.mouth_half * 0.71
        inner_up = _arc(xi0, xi1, y, y - self.lip_up * 0.43, 5)
        inner_dn = _arc(xi0, xi1, y, y + self.lip_down * 0.4, 5)
        dense = {
            "outer_up": np.array(_arc(x0, x1, y, y - self.lip_up, 21)),
            "outer_dn": np.array(_arc(x0, x1, y, y + self.lip_down, 21)),
            "inner_up": np.array(_arc(xi0, xi1, y, y - self.lip_up * 0.43, 15)),
            "inner_dn": np.array(_arc(xi0, xi1, y, y + self.lip_down * 0.4, 15)),
        }
        return outer_up, outer_dn, inner_up, inner_dn, dense

    def contour(self):
        cx, cy = self.face_center
        ax, ay = self.face_axes
        pts = _ellipse_ring(cx, cy, ax, ay, (218, 270, 322))
        return np.array(pts)

    def face_outline(self, dense: int = 48):
        cx, cy = self.face_center
        ax, ay = self.face_axes
        angles = np.linspace(0, 360, dense, endpoint=False)
        return np.array(_ellipse_ring(cx, cy, ax, ay, angles))


def _landmarks(geo: _Geometry) -> np.ndarray:
    pts = []
    pts.append(geo.brow("left")[0])
    pts.append(geo.brow("right")[0])
    pts.append(geo.eye("left")[0])
    pts.append(geo.eye("right")[0])
    bridge, tip, base, _ = geo.nose()
    pts += [bridge, tip, base]
    outer_up, outer_dn, inner_up, inner_dn, _ = geo.lips()
    pts.append(np.array(outer_up[:-1]))          # 42 corner + upper
    pts.append(np.array([outer_up[-1]]))         # 48 right corner
    pts.append(np.array(outer_dn[1:-1][::-1]))   # 49-53 lower right->left
    pts.append(np.array(inner_up[:-1]))
    pts.append(np.array([inner_up[-1]]))
    pts.append(np.array(inner_dn[1:-1][::-1]))
    pts.append(geo.contour())
    return np.vstack(pts)


def _band(curve: np.ndarray, half_width: float) -> np.ndarray:
    """Closed polygon tracing a curve with vertical thickness."""
    upper = curve + np.array([0.0, -half_width])
    lower = curve + np.array([0.0, half_width])
    return np.vstack([upper, lower[::-1]])


def _paint(img: np.ndarray, polygon_px: np.ndarray, color) -> None:
    mask = fill_polygon_mask(img.shape[0], img.shape[1], polygon_px)
    img[mask] = color


def generate_synthetic(params: SyntheticFaceParams) -> AnnotatedSample:
    layout = get_layout(params.layout_name)
    if layout.name != "synth65":
        raise ValueError(f"generator has no template for layout '{layout.name}'")
    rng = np.random.default_rng(params.seed)
    geo = _Geometry(rng, params.feature_jitter)

    size = params.image_size
    face_frac = rng.uniform(*params.face_scale)
    cx = size * (0.5 + _jit(rng, params.center_jitter))
    cy = size * (0.5 + _jit(rng, params.center_jitter))
    rot = _jit(rng, params.rotation_deg)
    scale_px = size * face_frac
    # unit frame -> image: scale about origin then rotate about face center
    place = affine_about((0.5, 0.5), rot, 1.0, (0.0, 0.0))
    to_px = np.array([[scale_px, 0.0, cx - 0.5 * scale_px],
                      [0.0, scale_px, cy - 0.5 * scale_px]])
    m = np.array([
        to_px[0, :2] @ place[:, :2],
        to_px[1, :2] @ place[:, :2],
    ])
    m = np.hstack([m, (to_px[:, :2] @ place[:, 2] + to_px[:, 2])[:, None]])

    def px(points):
        return transform_points(points, m)

    skin = np.array([205, 172, 150], dtype=np.float32) * (1 + _jit(rng, 0.05))
    img = np.full((size, size, 3), 96.0, dtype=np.float32)
    img += rng.normal(0.0, 6.0, img.shape).astype(np.float32)

    _paint(img, px(geo.face_outline()), skin)
    for side in ("left", "right"):
        _paint(img, px(_band(geo.brow(side)[1], 0.013)), (70.0, 52.0, 45.0))
    bridge, _, _, base_dense = geo.nose()
    _paint(img, px(_band(bridge, 0.008)), skin * 0.82)
    _paint(img, px(_band(base_dense, 0.008)), skin * 0.75)
    _, _, _, _, lip_dense = geo.lips()
    outer_loop = np.vstack([lip_dense["outer_up"], lip_dense["outer_dn"][::-1]])
    inner_loop = np.vstack([lip_dense["inner_up"], lip_dense["inner_dn"][::-1]])
    _paint(img, px(outer_loop), (178.0, 74.0, 82.0))
    _paint(img, px(inner_loop), (110.0, 38.0, 46.0))
    for side in ("left", "right"):
        _, ring = geo.eye(side)
        _paint(img, px(ring), (246.0, 242.0, 238.0))
        ecx, ecy = geo.eye_center(side)
        ax, ay = geo.eye_axes
        iris = _ellipse_ring(ecx, ecy, ax * 0.42, ay * 0.95,
                             np.linspace(0, 360, 20, endpoint=False))
        _paint(img, px(np.array(iris)), (58.0, 44.0, 40.0))

    img *= 1.0 + _jit(rng, params.brightness_jitter)
    img += rng.normal(0.0, params.noise_level * 255.0, img.shape).astype(np.float32)

    points = px(_landmarks(geo))
    return AnnotatedSample(
        image=to_uint8(img),
        points=points,
        tags=layout.tags,
        source=f"synthetic:{params.seed}",
        meta={"eye_centers": px(np.array([geo.eye_center("left"),
                                          geo.eye_center("right")]))},
    )


def generate_dataset(count: int, seed: int, **overrides) -> list[AnnotatedSample]:
    base = np.random.SeedSequence(seed)
    seeds = base.generate_state(count)
    return [generate_synthetic(SyntheticFaceParams(seed=int(s), **overrides))
            for s in seeds]
