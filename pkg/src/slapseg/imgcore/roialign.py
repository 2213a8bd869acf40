"""Quantization-free pooling of a fixed grid from a region of interest.

Every output bin is the average of bilinearly sampled values at
``samples_per_bin**2`` regularly spaced sub-pixel points; nothing is ever
rounded to integer coordinates. Sample coordinates get clamped to the
feature raster so constants are preserved even for regions poking past
the border.
"""

from __future__ import annotations

import numpy as np

from .geometry import Box


class RoiOutsideGridError(ValueError):
    """The region does not intersect the feature grid at all."""


def roi_sample_coords(
    roi: Box, out_size: int, samples_per_bin: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis sample positions (continuous coordinates) for each bin.

    Returns (xs, ys), each of shape (out_size * samples_per_bin,): bin j
    spans [edge + j*bin, edge + (j+1)*bin) and carries samples_per_bin
    evenly spaced points inside it.
    """
    if out_size < 1:
        raise ValueError(f"out_size must be >= 1, got {out_size}")
    if samples_per_bin < 1:
        raise ValueError(f"samples_per_bin must be >= 1, got {samples_per_bin}")
    m, s = out_size, samples_per_bin
    offsets = (np.arange(m * s, dtype=np.float64) + 0.5) / s  # in bin units
    xs = roi.left + offsets * (roi.width / m)
    ys = roi.top + offsets * (roi.height / m)
    return xs, ys


def bilinear_weights(
    coords: np.ndarray, size: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Clamped bilinear lookup decomposition along one axis.

    Maps continuous coordinates to array index space (pixel center at
    index + 0.5), clamps into [0, size-1], and returns (i0, i1, frac) such
    that value = (1-frac)*a[i0] + frac*a[i1].
    """
    idx = np.clip(coords - 0.5, 0.0, float(size - 1))
    i0 = np.floor(idx).astype(np.int64)
    i0 = np.minimum(i0, size - 2) if size > 1 else i0
    frac = idx - i0
    i1 = np.minimum(i0 + 1, size - 1)
    return i0, i1, frac


def roi_align(
    features: np.ndarray,
    roi: Box,
    out_size: int,
    samples_per_bin: int = 2,
) -> np.ndarray:
    """Pool an (H, W, C) or (H, W) grid into out_size x out_size bins.

    Raises :class:`RoiOutsideGridError` when the roi lies fully outside
    the grid (a degenerate proposal).
    """
    feats = np.asarray(features, dtype=np.float64)
    squeeze = feats.ndim == 2
    if squeeze:
        feats = feats[:, :, None]
    h, w, _ = feats.shape
    if roi.right <= 0 or roi.left >= w or roi.bottom <= 0 or roi.top >= h:
        raise RoiOutsideGridError(
            f"roi {roi.as_tuple()} outside {w}x{h} feature grid"
        )

    xs, ys = roi_sample_coords(roi, out_size, samples_per_bin)
    x0, x1, fx = bilinear_weights(xs, w)
    y0, y1, fy = bilinear_weights(ys, h)

    # gather the four neighbours over the full sample grid at once
    fx = fx[None, :, None]
    fy = fy[:, None, None]
    grid = (
        feats[np.ix_(y0, x0)] * (1 - fy) * (1 - fx)
        + feats[np.ix_(y0, x1)] * (1 - fy) * fx
        + feats[np.ix_(y1, x0)] * fy * (1 - fx)
        + feats[np.ix_(y1, x1)] * fy * fx
    )
    m, s = out_size, samples_per_bin
    pooled = grid.reshape(m, s, m, s, -1).mean(axis=(1, 3))
    return pooled[:, :, 0] if squeeze else pooled
