"""Landmark layout registry.

A layout names the semantics of each landmark index: inner/contour subset
tags, the horizontal-flip index permutation, the eye rings used to derive
pupil centers, and the closed index loops bounding renderable facial parts.

Two layouts ship built in:
  * "synth65": 62 inner + 3 contour points matching the synthetic face
    generator (brows, eyes, nose, lips, chin/jaw).
  * "ibug68": the common 68-point annotation scheme used by .pts files.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

PART_NAMES = ("upper_lip", "lower_lip", "left_cheek", "right_cheek",
              "left_eyelid", "right_eyelid")


@dataclass(frozen=True)
class LandmarkLayout:
    name: str
    tags: tuple[str, ...]                 # "inner" | "contour" per point
    flip_remap: tuple[int, ...]           # involution permutation
    left_eye: tuple[int, ...]             # ring indices, pupil = centroid
    right_eye: tuple[int, ...]
    parts: dict[str, tuple[int, ...]] = field(default_factory=dict)

    @property
    def num_points(self) -> int:
        return len(self.tags)

    def __post_init__(self):
        n = self.num_points
        remap = self.flip_remap
        if len(remap) != n or sorted(remap) != list(range(n)):
            raise ValueError("flip_remap must be a permutation of all indices")
        for i, j in enumerate(remap):
            if remap[j] != i:
                raise ValueError("flip_remap must be an involution")
        for part, loop in self.parts.items():
            if any(not 0 <= idx < n for idx in loop):
                raise ValueError(f"part '{part}' references invalid indices")

    def subset_indices(self, subset: str) -> np.ndarray:
        if subset == "all":
            return np.arange(self.num_points)
        if subset not in ("inner", "contour"):
            raise ValueError(f"unknown subset '{subset}'")
        return np.array([i for i, t in enumerate(self.tags) if t == subset])

    def pupils(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pts = np.asarray(points, dtype=np.float64)
        return (pts[list(self.left_eye)].mean(axis=0),
                pts[list(self.right_eye)].mean(axis=0))

    def interpupil_distance(self, points: np.ndarray) -> float:
        left, right = self.pupils(points)
        return float(np.hypot(*(right - left)))


def _flip_from_template(template: np.ndarray) -> tuple[int, ...]:
    """Derive the mirror permutation by nearest-match under x -> 1-x."""
    mirrored = template.copy()
    mirrored[:, 0] = 1.0 - mirrored[:, 0]
    remap = []
    for p in mirrored:
        remap.append(int(np.argmin(((template - p) ** 2).sum(axis=1))))
    return tuple(remap)


def _ellipse_ring(cx, cy, ax, ay, angles_deg):
    pts = []
    for ang in angles_deg:
        rad = np.deg2rad(ang)
        pts.append((cx + ax * np.cos(rad), cy - ay * np.sin(rad)))
    return pts


def _arc(x0, x1, y_end, y_peak, count):
    """Parabolic arc sampled left to right; peak at the midpoint."""
    ts = np.linspace(0.0, 1.0, count)
    xs = x0 + (x1 - x0) * ts
    ys = y_end + (y_peak - y_end) * (1.0 - (2.0 * ts - 1.0) ** 2)
    return list(zip(xs, ys))


@lru_cache(maxsize=None)
def synth65_template() -> np.ndarray:
    """Canonical 65-point face in a unit box, y pointing down."""
    pts: list[tuple[float, float]] = []
    # brows: 8-point arcs (left 0-7, right 8-15)
    pts += _arc(0.20, 0.45, 0.315, 0.275, 8)
    pts += _arc(0.55, 0.80, 0.315, 0.275, 8)
    # eye rings: [leftmost, upper x3, rightmost, lower x3] (left 16-23, right 24-31)
    ring_angles = (180, 135, 90, 45, 0, -45, -90, -135)
    pts += _ellipse_ring(0.335, 0.42, 0.075, 0.042, ring_angles)
    pts += _ellipse_ring(0.665, 0.42, 0.075, 0.042, ring_angles)
    # nose: bridge 32-35, tip 36, base 37-41
    for y in np.linspace(0.42, 0.555, 4):
        pts.append((0.5, float(y)))
    pts.append((0.5, 0.585))
    pts += _arc(0.43, 0.57, 0.60, 0.625, 5)
    # outer lips 42-53: [L corner, upper x5, R corner, lower x5 (right->left)]
    upper = _arc(0.345, 0.655, 0.73, 0.695, 7)
    lower = _arc(0.345, 0.655, 0.73, 0.78, 7)
    pts += upper[:-1]                      # 42 corner + 43-47 upper
    pts.append(upper[-1])                  # 48 right corner
    pts += lower[1:-1][::-1]               # 49-53 lower, right->left
    # inner lips 54-61: [L corner, upper x3, R corner, lower x3 (right->left)]
    upper_i = _arc(0.39, 0.61, 0.73, 0.715, 5)
    lower_i = _arc(0.39, 0.61, 0.73, 0.75, 5)
    pts += upper_i[:-1]
    pts.append(upper_i[-1])
    pts += lower_i[1:-1][::-1]
    # contour 62-64: left jaw, chin bottom, right jaw
    pts += [(0.20, 0.80), (0.50, 0.97), (0.80, 0.80)]
    template = np.array(pts, dtype=np.float64)
    assert template.shape == (65, 2)
    return template


def _synth65() -> LandmarkLayout:
    template = synth65_template()
    tags = tuple(["inner"] * 62 + ["contour"] * 3)
    parts = {
        "upper_lip": (42, 43, 44, 45, 46, 47, 48, 58, 57, 56, 55, 54),
        "lower_lip": (48, 49, 50, 51, 52, 53, 42, 54, 61, 60, 59, 58),
        "left_eyelid": (16, 17, 18, 19, 20, 7, 6, 5, 4, 3, 2, 1, 0),
        "right_eyelid": (24, 25, 26, 27, 28, 15, 14, 13, 12, 11, 10, 9, 8),
        "left_cheek": (16, 23, 37, 42, 62),
        "right_cheek": (28, 29, 41, 48, 64),
    }
    return LandmarkLayout(
        name="synth65",
        tags=tags,
        flip_remap=_flip_from_template(template),
        left_eye=tuple(range(16, 24)),
        right_eye=tuple(range(24, 32)),
        parts=parts,
    )


def _ibug68_flip() -> tuple[int, ...]:
    remap = list(range(68))

    def swap(pairs):
        for a, b in pairs:
            remap[a], remap[b] = b, a

    swap([(i, 16 - i) for i in range(8)])                      # jaw
    swap([(17, 26), (18, 25), (19, 24), (20, 23), (21, 22)])   # brows
    swap([(31, 35), (32, 34)])                                 # nostrils
    swap([(36, 45), (37, 44), (38, 43), (39, 42), (40, 47), (41, 46)])  # eyes
    swap([(48, 54), (49, 53), (50, 52), (55, 59), (56, 58)])   # outer mouth
    swap([(60, 64), (61, 63), (65, 67)])                       # inner mouth
    return tuple(remap)


def _ibug68() -> LandmarkLayout:
    tags = tuple(["contour"] * 17 + ["inner"] * 51)
    parts = {
        "upper_lip": (48, 49, 50, 51, 52, 53, 54, 64, 63, 62, 61, 60),
        "lower_lip": (54, 55, 56, 57, 58, 59, 48, 60, 67, 66, 65, 64),
        "left_eyelid": (36, 37, 38, 39, 21, 20, 19, 18, 17),
        "right_eyelid": (42, 43, 44, 45, 26, 25, 24, 23, 22),
        "left_cheek": (36, 41, 31, 48, 4, 2),
        "right_cheek": (45, 46, 35, 54, 12, 14),
    }
    return LandmarkLayout(
        name="ibug68",
        tags=tags,
        flip_remap=_ibug68_flip(),
        left_eye=tuple(range(36, 42)),
        right_eye=tuple(range(42, 48)),
        parts=parts,
    )


_LAYOUTS: dict[str, LandmarkLayout] = {}


def get_layout(name: str) -> LandmarkLayout:
    if name not in _LAYOUTS:
        if name == "synth65":
            _LAYOUTS[name] = _synth65()
        elif name == "ibug68":
            _LAYOUTS[name] = _ibug68()
        else:
            raise KeyError(f"unknown layout '{name}'")
    return _LAYOUTS[name]
