"""Minimal layer kit: forward passes return (output, cache) and every
backward consumes its cache, accumulates parameter gradients, and returns
the input gradient. All math is float64; images are single (C, H, W)
tensors since training is image-centric (one image per step).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..imgcore import Box
from ..imgcore.roialign import bilinear_weights, roi_sample_coords


@dataclass
class Param:
    name: str
    value: np.ndarray
    grad: np.ndarray = field(init=False)

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad[...] = 0.0


# ---------------------------------------------------------------------------
# im2col machinery

_COL_INDEX_CACHE: dict[tuple, np.ndarray] = {}


def _col_indices(c: int, hp: int, wp: int, k: int, stride: int) -> np.ndarray:
    """Flat indices into the padded (C, Hp, Wp) tensor for each column cell."""
    key = (c, hp, wp, k, stride)
    cached = _COL_INDEX_CACHE.get(key)
    if cached is not None:
        return cached
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    ci, di, dj = np.meshgrid(np.arange(c), np.arange(k), np.arange(k), indexing="ij")
    patch = (ci * hp * wp + di * wp + dj).ravel()  # (C*k*k,)
    oi, oj = np.meshgrid(np.arange(ho), np.arange(wo), indexing="ij")
    origin = (oi * stride * wp + oj * stride).ravel()  # (Ho*Wo,)
    idx = origin[:, None] + patch[None, :]
    _COL_INDEX_CACHE[key] = idx
    return idx


def im2col(x: np.ndarray, k: int, stride: int, pad: int) -> tuple[np.ndarray, tuple]:
    c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    hp, wp = h + 2 * pad, w + 2 * pad
    idx = _col_indices(c, hp, wp, k, stride)
    cols = xp.ravel()[idx]  # (Ho*Wo, C*k*k)
    return cols, (c, h, w, hp, wp, k, stride, pad, idx)


def col2im(dcols: np.ndarray, meta: tuple) -> np.ndarray:
    c, h, w, hp, wp, k, stride, pad, idx = meta
    flat = np.zeros(c * hp * wp)
    np.add.at(flat, idx.ravel(), dcols.ravel())
    xp = flat.reshape(c, hp, wp)
    return xp[:, pad : pad + h, pad : pad + w] if pad else xp


# ---------------------------------------------------------------------------
# layers


class Conv2d:
    """k x k convolution; weight laid out (C_in*k*k, C_out) for im2col."""

    def __init__(self, rng, c_in, c_out, k, stride=1, pad=0, name="conv", weight_scale=None):
        self.k, self.stride, self.pad = k, stride, pad
        self.c_in, self.c_out = c_in, c_out
        fan_in = c_in * k * k
        scale = weight_scale if weight_scale is not None else np.sqrt(2.0 / fan_in)
        self.weight = Param(f"{name}.weight", rng.standard_normal((fan_in, c_out)) * scale)
        self.bias = Param(f"{name}.bias", np.zeros(c_out))

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray):
        cols, meta = im2col(x, self.k, self.stride, self.pad)
        out = cols @ self.weight.value + self.bias.value  # (Ho*Wo, C_out)
        c, h, w = x.shape
        ho = (h + 2 * self.pad - self.k) // self.stride + 1
        wo = (w + 2 * self.pad - self.k) // self.stride + 1
        y = out.reshape(ho, wo, self.c_out).transpose(2, 0, 1)
        return y, (cols, meta, (ho, wo))

    def backward(self, dy: np.ndarray, cache):
        cols, meta, (ho, wo) = cache
        dout = dy.transpose(1, 2, 0).reshape(ho * wo, self.c_out)
        self.weight.grad += cols.T @ dout
        self.bias.grad += dout.sum(axis=0)
        dcols = dout @ self.weight.value.T
        return col2im(dcols, meta)


class ConvTranspose2x2:
    """2x upsampling transposed convolution (kernel 2, stride 2)."""

    def __init__(self, rng, c_in, c_out, name="deconv"):
        self.c_in, self.c_out = c_in, c_out
        scale = np.sqrt(2.0 / c_in)
        self.weight = Param(f"{name}.weight", rng.standard_normal((c_in, c_out * 4)) * scale)
        self.bias = Param(f"{name}.bias", np.zeros(c_out))

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray):
        c, h, w = x.shape
        xm = x.reshape(c, h * w).T  # (H*W, C_in)
        out = xm @ self.weight.value  # (H*W, C_out*4)
        out = out.reshape(h, w, self.c_out, 2, 2).transpose(2, 0, 3, 1, 4)
        y = out.reshape(self.c_out, 2 * h, 2 * w) + self.bias.value[:, None, None]
        return y, (xm, (c, h, w))

    def backward(self, dy: np.ndarray, cache):
        xm, (c, h, w) = cache
        self.bias.grad += dy.sum(axis=(1, 2))
        d = dy.reshape(self.c_out, h, 2, w, 2).transpose(1, 3, 0, 2, 4).reshape(h * w, self.c_out * 4)
        self.weight.grad += xm.T @ d
        dx = (d @ self.weight.value.T).T.reshape(c, h, w)
        return dx


class Linear:
    def __init__(self, rng, n_in, n_out, name="fc", weight_scale=None):
        scale = weight_scale if weight_scale is not None else np.sqrt(2.0 / n_in)
        self.weight = Param(f"{name}.weight", rng.standard_normal((n_in, n_out)) * scale)
        self.bias = Param(f"{name}.bias", np.zeros(n_out))

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray):
        # x: (N, n_in)
        return x @ self.weight.value + self.bias.value, x

    def backward(self, dy: np.ndarray, cache):
        x = cache
        self.weight.grad += x.T @ dy
        self.bias.grad += dy.sum(axis=0)
        return dy @ self.weight.value.T


def relu_forward(x: np.ndarray):
    mask = x > 0
    return x * mask, mask


def relu_backward(dy: np.ndarray, mask) -> np.ndarray:
    return dy * mask


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def upsample2_forward(x: np.ndarray):
    """Nearest-neighbour 2x upsampling."""
    return x.repeat(2, axis=1).repeat(2, axis=2), x.shape


def upsample2_backward(dy: np.ndarray, shape) -> np.ndarray:
    c, h, w = shape
    return dy.reshape(c, h, 2, w, 2).sum(axis=(2, 4))


class RoiAlignLayer:
    """Differentiable pooling of (C, H, W) features over a batch of rois.

    Shares its sampling grid and clamped bilinear decomposition with the
    reference pooling op, so the two stay numerically identical. Pooling
    is linear in the features, so the whole batch is one sparse matrix
    (bins x pixels) applied forward and, transposed, backward.
    """

    def __init__(self, out_size: int, samples_per_bin: int = 2):
        self.out_size = out_size
        self.samples_per_bin = samples_per_bin

    def _pool_matrix(self, rois: np.ndarray, h: int, w: int):
        from scipy import sparse

        m, s = self.out_size, self.samples_per_bin
        n = rois.shape[0]
        ms = m * s
        x0 = np.empty((n, ms), dtype=np.int64)
        x1 = np.empty((n, ms), dtype=np.int64)
        fx = np.empty((n, ms))
        y0 = np.empty((n, ms), dtype=np.int64)
        y1 = np.empty((n, ms), dtype=np.int64)
        fy = np.empty((n, ms))
        for i, roi in enumerate(rois):
            xs, ys = roi_sample_coords(Box.from_tuple(roi), m, s)
            x0[i], x1[i], fx[i] = bilinear_weights(xs, w)
            y0[i], y1[i], fy[i] = bilinear_weights(ys, h)

        # row: output bin of each sample point; col: source pixel
        bin_row = (
            np.arange(n)[:, None, None] * (m * m)
            + (np.arange(ms) // s)[None, :, None] * m
            + (np.arange(ms) // s)[None, None, :]
        )
        rows = np.broadcast_to(bin_row, (n, ms, ms)).ravel()
        wx0, wx1 = (1 - fx)[:, None, :], fx[:, None, :]
        wy0, wy1 = (1 - fy)[:, :, None], fy[:, :, None]
        scale = 1.0 / (s * s)
        cols = []
        data = []
        for yy, wy in ((y0, wy0), (y1, wy1)):
            for xx, wx in ((x0, wx0), (x1, wx1)):
                cols.append((yy[:, :, None] * w + xx[:, None, :]).ravel())
                data.append(np.broadcast_to(wy * wx * scale, (n, ms, ms)).ravel())
        return sparse.csr_matrix(
            (np.concatenate(data), (np.tile(rows, 4), np.concatenate(cols))),
            shape=(n * m * m, h * w),
        )

    def forward(self, feats: np.ndarray, rois: np.ndarray):
        c, h, w = feats.shape
        m = self.out_size
        n = rois.shape[0]
        pool = self._pool_matrix(rois, h, w)
        pooled = pool @ feats.reshape(c, h * w).T  # (N*m*m, C)
        out = pooled.reshape(n, m, m, c).transpose(0, 3, 1, 2)
        return out, (pool, feats.shape)

    def backward(self, dout: np.ndarray, cache) -> np.ndarray:
        pool, (c, h, w) = cache
        dmat = pool.T @ dout.transpose(0, 2, 3, 1).reshape(-1, c)  # (h*w, C)
        return np.ascontiguousarray(dmat.T).reshape(c, h, w)
