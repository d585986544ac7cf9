"""Image-space utilities: bilinear sampling, box crop+resize with the exact
inverse mapping for landmark coordinates, affine warps, and polygon fill.

Images are (H, W, C) float32 or uint8 arrays; points are (x, y) pixel
coordinates with the origin at the center of the top-left pixel.
"""

from __future__ import annotations

import numpy as np


def bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample img at continuous (xs, ys) with edge-clamped neighbors."""
    h, w = img.shape[:2]
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    wx = (xs - x0)[..., None]
    wy = (ys - y0)[..., None]
    ix0 = np.clip(x0, 0, w - 1).astype(np.int64)
    ix1 = np.clip(x0 + 1, 0, w - 1).astype(np.int64)
    iy0 = np.clip(y0, 0, h - 1).astype(np.int64)
    iy1 = np.clip(y0 + 1, 0, h - 1).astype(np.int64)
    img_f = img.astype(np.float32, copy=False)
    out = ((1 - wy) * (1 - wx) * img_f[iy0, ix0]
           + (1 - wy) * wx * img_f[iy0, ix1]
           + wy * (1 - wx) * img_f[iy1, ix0]
           + wy * wx * img_f[iy1, ix1])
    return out.astype(np.float32)


def crop_resize(img: np.ndarray, box: tuple[float, float, float, float],
                out_size: int) -> np.ndarray:
    """Resample the box region to out_size x out_size.

    Output pixel u maps to frame coordinate x0 + (u + 0.5) * bw/out - 0.5,
    i.e. the box spans pixel areas; crop_to_frame/frame_to_crop apply the
    same mapping to landmark coordinates.
    """
    x0, y0, x1, y1 = box
    bw, bh = x1 - x0, y1 - y0
    if bw <= 0 or bh <= 0:
        raise ValueError("empty crop box")
    us = np.arange(out_size, dtype=np.float64)
    xs = x0 + (us + 0.5) * (bw / out_size) - 0.5
    ys = y0 + (us + 0.5) * (bh / out_size) - 0.5
    grid_x = np.broadcast_to(xs, (out_size, out_size))
    grid_y = np.broadcast_to(ys[:, None], (out_size, out_size))
    return bilinear_sample(img, grid_x, grid_y)


def frame_to_crop(points: np.ndarray, box, out_size: int) -> np.ndarray:
    x0, y0, x1, y1 = box
    pts = np.asarray(points, dtype=np.float64)
    out = np.empty_like(pts)
    out[..., 0] = (pts[..., 0] - x0 + 0.5) * (out_size / (x1 - x0)) - 0.5
    out[..., 1] = (pts[..., 1] - y0 + 0.5) * (out_size / (y1 - y0)) - 0.5
    return out


def crop_to_frame(points: np.ndarray, box, out_size: int) -> np.ndarray:
    x0, y0, x1, y1 = box
    pts = np.asarray(points, dtype=np.float64)
    out = np.empty_like(pts)
    out[..., 0] = x0 + (pts[..., 0] + 0.5) * ((x1 - x0) / out_size) - 0.5
    out[..., 1] = y0 + (pts[..., 1] + 0.5) * ((y1 - y0) / out_size) - 0.5
    return out


def resize(img: np.ndarray, out_size: int) -> np.ndarray:
    h, w = img.shape[:2]
    return crop_resize(img, (-0.5, -0.5, w - 0.5, h - 0.5), out_size)


# -- affine -------------------------------------------------------------------


def affine_about(center: tuple[float, float], angle_deg: float, scale: float,
                 translate: tuple[float, float]) -> np.ndarray:
    """2x3 forward point map: rotate+scale about center, then translate."""
    cx, cy = center
    rad = np.deg2rad(angle_deg)
    a = scale * np.cos(rad)
    b = scale * np.sin(rad)
    tx, ty = translate
    # p' = R*(p - c) + c + t
    return np.array([
        [a, -b, cx - a * cx + b * cy + tx],
        [b, a, cy - b * cx - a * cy + ty],
    ], dtype=np.float64)


def transform_points(points: np.ndarray, m: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    return pts @ m[:, :2].T + m[:, 2]


def invert_affine(m: np.ndarray) -> np.ndarray:
    lin = np.linalg.inv(m[:, :2])
    return np.hstack([lin, -lin @ m[:, 2:3]])


def warp_affine(img: np.ndarray, m: np.ndarray, out_shape=None) -> np.ndarray:
    """Warp by the forward point map m (edge-clamped bilinear resample)."""
    h, w = (img.shape[:2] if out_shape is None else out_shape)
    inv = invert_affine(m)
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    src_x = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    src_y = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]
    return bilinear_sample(img, src_x, src_y)


# -- polygon rasterization ---------------------------------------------------------


def fill_polygon_mask(h: int, w: int, points: np.ndarray) -> np.ndarray:
    """Even-odd scanline fill; pixel (x, y) tests its center against the
    closed polygon given by points (P, 2)."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 3:
        raise ValueError("polygon needs at least 3 points")
    parity = np.zeros((h, w), dtype=bool)
    ys = np.arange(h, dtype=np.float64)
    cols = np.arange(w, dtype=np.float64)
    p1 = pts
    p2 = np.roll(pts, -1, axis=0)
    for (x1, y1), (x2, y2) in zip(p1, p2):
        if y1 == y2:
            continue
        ylo, yhi = (y1, y2) if y1 < y2 else (y2, y1)
        rows = np.nonzero((ys >= ylo) & (ys < yhi))[0]
        if rows.size == 0:
            continue
        xi = x1 + (ys[rows] - y1) * (x2 - x1) / (y2 - y1)
        parity[rows] ^= cols[None, :] < xi[:, None]
    return parity


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.round(img), 0, 255).astype(np.uint8)
