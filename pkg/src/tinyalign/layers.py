"""Convolutional building blocks: conv2d (standard / depthwise / grouped),
batch normalization, nearest-neighbor upsampling, inverted residual blocks,
and RoI align.

conv2d is evaluated as k*k shifted GEMMs over strided input slices, which
keeps peak memory at one slice copy instead of a full im2col buffer. The
kernel-position loop runs in a fixed order so accumulation is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0
    groups: int = 1
    bias: bool = True
    activation: str = "none"

    def __post_init__(self):
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ValueError(
                f"channels ({self.in_channels}->{self.out_channels}) must be divisible "
                f"by groups={self.groups}")
        if self.activation not in ("none", "relu6"):
            raise ValueError(f"unknown activation '{self.activation}'")
        if self.kernel < 1 or self.stride < 1 or self.padding < 0:
            raise ValueError("invalid kernel/stride/padding")

    @property
    def depthwise(self) -> bool:
        return self.groups == self.in_channels == self.out_channels

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels // self.groups, self.kernel, self.kernel)

    def out_size(self, h: int, w: int) -> tuple[int, int]:
        k, s, p = self.kernel, self.stride, self.padding
        return (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1


@dataclass(frozen=True)
class InvertedResidualSpec:
    in_channels: int
    out_channels: int
    expansion: int
    stride: int

    @property
    def hidden_channels(self) -> int:
        return self.in_channels * self.expansion

    @property
    def use_skip(self) -> bool:
        return self.stride == 1 and self.in_channels == self.out_channels

    def conv_specs(self, with_bias: bool) -> list[tuple[str, ConvSpec]]:
        """Expand -> depthwise -> project sequence (expand omitted when t==1)."""
        h = self.hidden_channels
        specs = []
        if self.expansion != 1:
            specs.append(("expand", ConvSpec(self.in_channels, h, 1, bias=with_bias,
                                             activation="relu6")))
        specs.append(("depthwise", ConvSpec(h, h, 3, stride=self.stride, padding=1,
                                            groups=h, bias=with_bias, activation="relu6")))
        specs.append(("project", ConvSpec(h, self.out_channels, 1, bias=with_bias,
                                          activation="none")))
        return specs


# -- convolution ---------------------------------------------------------------


def conv2d(x: Tensor, spec: ConvSpec, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Grouped 2-D convolution, NCHW, zero padding; differentiable in x/w/b."""
    n, c, h, w = x.shape
    if c != spec.in_channels:
        raise ValueError(f"input has {c} channels, spec expects {spec.in_channels}")
    if weight.shape != spec.weight_shape:
        raise ValueError(f"weight shape {weight.shape} != {spec.weight_shape}")
    if spec.bias != (bias is not None):
        raise ValueError("bias presence does not match spec")
    k, s, p, g = spec.kernel, spec.stride, spec.padding, spec.groups
    ho, wo = spec.out_size(h, w)
    if ho < 1 or wo < 1:
        raise ValueError("spatial extent smaller than kernel after padding")

    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    o = spec.out_channels
    cg, og = c // g, o // g
    pq = ho * wo
    wd = weight.data

    def slice_at(arr, i, j):
        return arr[:, :, i:i + (ho - 1) * s + 1:s, j:j + (wo - 1) * s + 1:s]

    if spec.depthwise:
        acc = np.zeros((n, o, ho, wo), dtype=x.data.dtype)
        for i in range(k):
            for j in range(k):
                acc += wd[:, 0, i, j].reshape(1, c, 1, 1) * slice_at(xp, i, j)
        out = acc
    elif g == 1:
        acc = np.zeros((n, o, pq), dtype=x.data.dtype)
        for i in range(k):
            for j in range(k):
                acc += np.matmul(wd[:, :, i, j], slice_at(xp, i, j).reshape(n, c, pq))
        out = acc.reshape(n, o, ho, wo)
    else:
        wg = wd.reshape(g, og, cg, k, k)
        acc = np.zeros((n, g, og, pq), dtype=x.data.dtype)
        for i in range(k):
            for j in range(k):
                sl = slice_at(xp, i, j).reshape(n, g, cg, pq)
                acc += np.matmul(wg[:, :, :, i, j], sl)
        out = acc.reshape(n, o, ho, wo)
    if bias is not None:
        out = out + bias.data.reshape(1, o, 1, 1)

    inputs = (x, weight) if bias is None else (x, weight, bias)

    def vjp(grad):
        gb = grad.sum(axis=(0, 2, 3)) if bias is not None else None
        dw = np.zeros_like(wd)
        dxp = np.zeros_like(xp)
        g2 = grad.reshape(n, o, pq)
        if spec.depthwise:
            for i in range(k):
                for j in range(k):
                    sl = slice_at(xp, i, j)
                    dw[:, 0, i, j] = (grad * sl).sum(axis=(0, 2, 3))
                    slice_at(dxp, i, j)[...] += wd[:, 0, i, j].reshape(1, c, 1, 1) * grad
        elif g == 1:
            wt = wd.transpose(2, 3, 1, 0)  # (k,k,C,O)
            for i in range(k):
                for j in range(k):
                    sl2 = slice_at(xp, i, j).reshape(n, c, pq)
                    dw[:, :, i, j] = np.matmul(g2, sl2.transpose(0, 2, 1)).sum(axis=0)
                    dsl = np.matmul(wt[i, j], g2)
                    slice_at(dxp, i, j)[...] += dsl.reshape(n, c, ho, wo)
        else:
            wg = wd.reshape(g, og, cg, k, k)
            gg = grad.reshape(n, g, og, pq)
            dwg = dw.reshape(g, og, cg, k, k)
            for i in range(k):
                for j in range(k):
                    slg = slice_at(xp, i, j).reshape(n, g, cg, pq)
                    dwg[:, :, :, i, j] = np.matmul(gg, slg.transpose(0, 1, 3, 2)).sum(axis=0)
                    dsl = np.matmul(wg[:, :, :, i, j].transpose(0, 2, 1), gg)
                    slice_at(dxp, i, j)[...] += dsl.reshape(n, c, ho, wo)
        dx = dxp[:, :, p:p + h, p:p + w] if p else dxp
        if bias is None:
            return dx, dw
        return dx, dw, gb

    out_t = T.make_op("conv2d", inputs, out, vjp)
    if spec.activation == "relu6":
        out_t = T.relu6(out_t)
    return out_t


# -- batch normalization ---------------------------------------------------------


class BatchNorm2d:
    """Per-channel batch normalization; composite of primitive tensor ops so
    the backward pass comes from the tape."""

    def __init__(self, channels: int):
        self.channels = channels
        self.gamma = Tensor(np.ones(channels, dtype=np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=np.float32), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=np.float32)
        self.running_var = np.ones(channels, dtype=np.float32)

    def forward(self, x: Tensor, training: bool) -> Tensor:
        cshape = (1, self.channels, 1, 1)
        if training:
            mu = T.reduce_mean(x, axes=(0, 2, 3), keepdims=True)
            xc = T.sub(x, mu)
            var = T.reduce_mean(T.mul(xc, xc), axes=(0, 2, 3), keepdims=True)
            inv = T.div(Tensor(np.ones(cshape, dtype=x.dtype)),
                        T.sqrt(T.add(var, Tensor(np.full(cshape, BN_EPS, dtype=x.dtype)))))
            m = BN_MOMENTUM
            self.running_mean = ((1 - m) * self.running_mean
                                 + m * mu.data.reshape(-1)).astype(np.float32)
            self.running_var = ((1 - m) * self.running_var
                                + m * var.data.reshape(-1)).astype(np.float32)
        else:
            xc = T.sub(x, Tensor(self.running_mean.reshape(cshape).astype(x.dtype)))
            inv = Tensor((1.0 / np.sqrt(self.running_var + BN_EPS))
                         .reshape(cshape).astype(x.dtype))
        y = T.mul(T.mul(xc, inv), T.reshape(self.gamma, cshape))
        return T.add(y, T.reshape(self.beta, cshape))

    def fold_scale_shift(self) -> tuple[np.ndarray, np.ndarray]:
        """(scale, shift) such that y = scale*x + shift reproduces eval-mode BN."""
        scale = self.gamma.data / np.sqrt(self.running_var + BN_EPS)
        shift = self.beta.data - scale * self.running_mean
        return scale.astype(np.float32), shift.astype(np.float32)


# -- nearest upsampling ----------------------------------------------------------


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    if factor == 1:
        return x
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)

    def vjp(g):
        return (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),)

    return T.make_op("upsample_nearest", (x,), out, vjp)


# -- RoI align -------------------------------------------------------------------


def roi_align(features: Tensor, boxes: np.ndarray, out_size: int) -> Tensor:
    """Bilinear crop of normalized boxes into out_size x out_size grids.

    features: (N, C, H, W); boxes: (N, R, 4) as (x0, y0, x1, y1) in [0, 1].
    One sample per output cell, taken at the cell center in continuous feature
    coordinates (a normalized box spans the pixel *areas*, so the full box
    with out_size == W samples exactly at the integer grid). Sample points
    falling outside the grid use edge-clamped bilinear support. Returns
    (N, R, C, S, S); differentiable w.r.t. features; boxes are constants.
    """
    n, c, h, w = features.shape
    boxes = np.asarray(boxes, dtype=np.float64)
    if boxes.ndim != 3 or boxes.shape[0] != n or boxes.shape[2] != 4:
        raise ValueError(f"boxes must be (N, R, 4), got {boxes.shape}")
    s = int(out_size)
    if s < 1:
        raise ValueError("out_size must be >= 1")
    clamped = np.clip(boxes, 0.0, 1.0)
    widths = clamped[..., 2] - clamped[..., 0]
    heights = clamped[..., 3] - clamped[..., 1]
    if (widths <= 0).any() or (heights <= 0).any():
        raise ValueError("degenerate box: zero area after clamping to [0,1]^2")
    r = boxes.shape[1]

    cells = (np.arange(s, dtype=np.float64) + 0.5) / s
    # continuous feature coords; pixel (i,j) sits at coordinate (i, j)
    sx = (clamped[..., 0, None] + cells * widths[..., None]) * w - 0.5   # (N,R,S)
    sy = (clamped[..., 1, None] + cells * heights[..., None]) * h - 0.5
    sx = np.broadcast_to(sx[:, :, None, :], (n, r, s, s))
    sy = np.broadcast_to(sy[:, :, :, None], (n, r, s, s))

    x0 = np.floor(sx)
    y0 = np.floor(sy)
    wx = (sx - x0).astype(features.dtype)
    wy = (sy - y0).astype(features.dtype)
    ix0 = np.clip(x0, 0, w - 1).astype(np.int32)
    ix1 = np.clip(x0 + 1, 0, w - 1).astype(np.int32)
    iy0 = np.clip(y0, 0, h - 1).astype(np.int32)
    iy1 = np.clip(y0 + 1, 0, h - 1).astype(np.int32)

    nidx = np.arange(n, dtype=np.int32).reshape(n, 1, 1, 1)
    corners = ((iy0, ix0, (1 - wy) * (1 - wx)),
               ((iy0, ix1, (1 - wy) * wx)),
               ((iy1, ix0, wy * (1 - wx))),
               ((iy1, ix1, wy * wx)))
    out = np.zeros((n, r, s, s, c), dtype=features.dtype)
    data = features.data
    for iy, ix, wgt in corners:
        out += data[nidx, :, iy, ix] * wgt[..., None]
    out = np.ascontiguousarray(out.transpose(0, 1, 4, 2, 3))

    def vjp(grad):
        # scatter-add (n, c, y, x) contributions via bincount on linear indices
        dfeat = np.zeros(n * c * h * w, dtype=np.float64)
        cidx = np.arange(c, dtype=np.int32).reshape(1, 1, c, 1, 1)
        chan_base = (nidx[:, :, None] * c + cidx) * (h * w)  # (N,1,C,1,1)
        for iy, ix, wgt in corners:
            spatial = (iy * w + ix)[:, :, None, :, :]
            lin = (chan_base + spatial).ravel()
            contrib = (grad * wgt[:, :, None, :, :]).ravel()
            dfeat += np.bincount(lin, weights=contrib, minlength=dfeat.size)
        return (dfeat.reshape(n, c, h, w).astype(features.dtype),)

    return T.make_op("roi_align", (features,), out, vjp)
