"""Heatmap synthesis, decoding, and losses.

Grid convention: the heatmap array is indexed [row, col] = [y, x]; the pixel
at array position (y, x) has continuous coordinate (x, y), origin at the
first pixel. Decoded coordinates are convex combinations of grid positions,
so they always fall inside [0, W-1] x [0, H-1].
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .layout import LandmarkLayout
from .tensor import NumericError, Tensor


def gaussian_heatmap(center: tuple[float, float], size: int | tuple[int, int],
                     sigma: float) -> np.ndarray:
    """Unnormalized 2-D Gaussian with peak 1 at `center` = (x, y) in grid units.

    Centers outside the grid are allowed; the result is a truncated tail
    (the motivation for keeping a coordinate-space auxiliary loss).
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    h, w = (size, size) if isinstance(size, int) else size
    if h < 2 or w < 2:
        raise ValueError("heatmap must be at least 2x2")
    cx, cy = center
    ys = np.arange(h, dtype=np.float64).reshape(h, 1)
    xs = np.arange(w, dtype=np.float64).reshape(1, w)
    d2 = (xs - cx) ** 2 + (ys - cy) ** 2
    return np.exp(-d2 / (2.0 * sigma * sigma)).astype(np.float32)


def gaussian_heatmap_batch(coords: np.ndarray, size: int | tuple[int, int],
                           sigma: float) -> np.ndarray:
    """(N, L, 2) grid-unit coordinates -> (N, L, H, W) Gaussian targets."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    h, w = (size, size) if isinstance(size, int) else size
    coords = np.asarray(coords, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64).reshape(1, 1, h, 1)
    xs = np.arange(w, dtype=np.float64).reshape(1, 1, 1, w)
    cx = coords[..., 0][..., None, None]
    cy = coords[..., 1][..., None, None]
    d2 = (xs - cx) ** 2 + (ys - cy) ** 2
    return np.exp(-d2 / (2.0 * sigma * sigma)).astype(np.float32)


def outside_grid(coords: np.ndarray, size: int | tuple[int, int]) -> np.ndarray:
    h, w = (size, size) if isinstance(size, int) else size
    coords = np.asarray(coords)
    return ((coords[..., 0] < 0) | (coords[..., 0] > w - 1)
            | (coords[..., 1] < 0) | (coords[..., 1] > h - 1))


def _coordinate_grids(h: int, w: int, dtype) -> tuple[Tensor, Tensor]:
    xs = np.broadcast_to(np.arange(w, dtype=dtype), (h, w)).copy()
    ys = np.broadcast_to(np.arange(h, dtype=dtype).reshape(h, 1), (h, w)).copy()
    return Tensor(xs), Tensor(ys)


def soft_argmax(logits: Tensor, normalizer: str = "sigmoid") -> Tensor:
    """Expected grid coordinate under the normalized heatmap activations.

    logits: (..., H, W); returns (..., 2) as (x, y) in grid units.
    Differentiable; normalizer is "sigmoid" (sigmoid then sum-normalize,
    the default matching sigmoid cross-entropy training) or "softmax".
    """
    if logits.ndim < 2:
        raise ValueError("logits must have at least 2 dims")
    h, w = logits.shape[-2], logits.shape[-1]
    if normalizer == "sigmoid":
        act = T.sigmoid(logits)
    elif normalizer == "softmax":
        shift = logits.data.max(axis=(-2, -1), keepdims=True)
        act = T.exp(T.sub(logits, Tensor(shift)))
    else:
        raise ValueError(f"unknown normalizer '{normalizer}'")
    denom = T.reduce_sum(act, axes=(-2, -1), keepdims=True)
    if float(denom.data.min()) <= T.EPS:
        raise NumericError("soft_argmax normalization denominator underflow")
    rho = T.div(act, denom)
    xg, yg = _coordinate_grids(h, w, logits.dtype)
    x = T.reduce_sum(T.mul(rho, xg), axes=(-2, -1))
    y = T.reduce_sum(T.mul(rho, yg), axes=(-2, -1))
    lead = logits.shape[:-2]
    x = T.reshape(x, lead + (1,))
    y = T.reshape(y, lead + (1,))
    return T.concat([x, y], axis=len(lead))


def distance_weights(gt_coords: np.ndarray, size: int | tuple[int, int]) -> np.ndarray:
    """Per-pixel weights 2*d^2/(W^2+H^2) around each target coordinate.

    gt_coords: (..., 2) in grid units -> weights (..., H, W). Zero at the
    target pixel, maximal at the farthest grid corner.
    """
    h, w = (size, size) if isinstance(size, int) else size
    coords = np.asarray(gt_coords, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    xs = np.arange(w, dtype=np.float64)
    cx = coords[..., 0][..., None, None]
    cy = coords[..., 1][..., None, None]
    d2 = (xs.reshape(1, w) - cx) ** 2 + (ys.reshape(h, 1) - cy) ** 2
    return (d2 * 2.0 / (w * w + h * h)).astype(np.float32)


def heatmap_loss(logits: Tensor, gt_maps: np.ndarray, gt_coords: np.ndarray) -> Tensor:
    """Distance-weighted pixelwise sigmoid cross entropy.

    logits: (N, L, H, W); gt_maps: matching soft targets in [0, 1];
    gt_coords: (N, L, 2) grid-unit target coordinates for the weights.
    Sums over landmarks and pixels, averages over the batch only.
    """
    if logits.shape != tuple(gt_maps.shape):
        raise ValueError(f"logit shape {logits.shape} != target shape {gt_maps.shape}")
    n = logits.shape[0]
    h, w = logits.shape[-2], logits.shape[-1]
    weights = distance_weights(gt_coords, (h, w)).astype(logits.dtype)
    if weights.shape != logits.shape:
        raise ValueError("gt_coords shape inconsistent with logits")
    t = Tensor(np.asarray(gt_maps, dtype=logits.dtype))
    one = Tensor(np.ones((), dtype=logits.dtype))
    p = T.sigmoid(logits)
    bce = T.neg(T.add(T.mul(t, T.log(p)),
                      T.mul(T.sub(one, t), T.log(T.sub(one, p)))))
    total = T.reduce_sum(T.mul(bce, Tensor(weights)))
    return T.mul(total, Tensor(np.asarray(1.0 / n, dtype=logits.dtype)))


def l2_coord_loss(pred: Tensor, gt: np.ndarray) -> Tensor:
    """Mean (over batch and landmarks) squared Euclidean distance.

    pred: (N, L, 2) tensor in normalized image coordinates; gt numpy alike.
    """
    gt = np.asarray(gt, dtype=pred.dtype)
    if pred.shape != gt.shape:
        raise ValueError(f"pred shape {pred.shape} != gt shape {gt.shape}")
    diff = T.sub(pred, Tensor(gt))
    sq = T.mul(diff, diff)
    per_point = T.reduce_sum(sq, axes=(-1,))     # squared distance per landmark
    return T.reduce_mean(per_point)


def nme_percent(pred: np.ndarray, gt: np.ndarray, layout: LandmarkLayout,
                subset: str = "all") -> float:
    """Mean point-to-point error over the subset, as % of inter-pupil distance."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.shape[0] != layout.num_points:
        raise ValueError("landmark count mismatch with layout")
    ipd = layout.interpupil_distance(gt)
    if ipd <= 0:
        raise ValueError("zero inter-pupil distance")
    idx = layout.subset_indices(subset)
    dist = np.linalg.norm(pred[idx] - gt[idx], axis=1)
    return float(dist.mean() / ipd * 100.0)


def per_landmark_nme(pred: np.ndarray, gt: np.ndarray,
                     layout: LandmarkLayout) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    ipd = layout.interpupil_distance(gt)
    if ipd <= 0:
        raise ValueError("zero inter-pupil distance")
    return np.linalg.norm(pred - gt, axis=1) / ipd * 100.0
