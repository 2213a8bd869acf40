"""Classical projection-profile slap segmenter.

Foreground comes from a global Otsu threshold (ridges are darker than
the platen), the rotation estimate from the principal axis of the
foreground's second-order central moments, and finger boxes from column
projection valleys followed by per-band row extents. The rotation
estimate feeds the detector's inference path; the boxes seed annotation
proposals and serve as the classical comparison model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imgcore import Box, GrayImage, rotate_image

MAX_ANGLE = 45.0
VALLEY_FRACTION = 0.2       # projection minima below this fraction of the peak split bands
ROW_EXTENT_FRACTION = 0.2   # rows within a band count while above this fraction of the band peak
SMOOTH_WINDOW_FRACTION = 0.02
MIN_BAND_WIDTH_PX = 4
LOW_CONFIDENCE = 0.1


@dataclass(frozen=True)
class BaselineResult:
    angle: float
    boxes: tuple[Box, ...]            # upright frame
    confidences: tuple[float, ...]
    degenerate_rotation: bool = False

    def __post_init__(self):
        if abs(self.angle) > MAX_ANGLE:
            raise ValueError(f"|angle| must be <= {MAX_ANGLE}, got {self.angle}")
        if len(self.boxes) != len(self.confidences):
            raise ValueError("boxes and confidences must align")


def otsu_threshold(pixels: np.ndarray) -> int:
    """Histogram split maximizing between-class variance."""
    hist = np.bincount(pixels.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    omega = np.cumsum(hist) / total
    mu = np.cumsum(hist * np.arange(256)) / total
    mu_total = mu[-1]
    denom = omega * (1.0 - omega)
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma_b = np.where(denom > 0, (mu_total * omega - mu) ** 2 / denom, 0.0)
    return int(np.argmax(sigma_b))


def binarize(img: GrayImage) -> np.ndarray:
    """Foreground mask (True = ridge ink, darker than the threshold)."""
    pixels = img.pixels
    if pixels.min() == pixels.max():
        return np.zeros_like(pixels, dtype=bool)
    return pixels <= otsu_threshold(pixels)


def estimate_rotation(img: GrayImage) -> tuple[float, bool]:
    """(angle, degenerate) such that rotate_image(img, -angle) is upright.

    The angle is the orientation of the foreground principal axis folded
    into [-45, 45]; an isotropic foreground cannot orient and reports 0
    with the degeneracy flag set.
    """
    fg = binarize(img)
    ys, xs = np.nonzero(fg)
    if len(xs) == 0:
        return 0.0, True
    x = xs + 0.5 - xs.mean() - 0.5
    y = ys + 0.5 - ys.mean() - 0.5
    mu20 = float((x * x).mean())
    mu02 = float((y * y).mean())
    mu11 = float((x * y).mean())
    spread = math.hypot(mu20 - mu02, 2 * mu11)
    if spread < 1e-9 or spread < 0.05 * (mu20 + mu02):
        return 0.0, True
    angle = 0.5 * math.degrees(math.atan2(2 * mu11, mu20 - mu02))
    while angle > MAX_ANGLE:
        angle -= 90.0
    while angle < -MAX_ANGLE:
        angle += 90.0
    return angle, False


def _smooth(values: np.ndarray, window: int) -> np.ndarray:
    if window <= 1:
        return values.astype(np.float64)
    kernel = np.ones(window) / window
    return np.convolve(values, kernel, mode="same")


def _find_bands(profile: np.ndarray, max_bands: int) -> list[tuple[int, int]]:
    """Up to max_bands (start, end) column ranges above the valley cut."""
    peak = profile.max()
    if peak <= 0:
        return []
    active = profile > VALLEY_FRACTION * peak
    bands = []
    start = None
    for i, on in enumerate(active):
        if on and start is None:
            start = i
        elif not on and start is not None:
            bands.append((start, i))
            start = None
    if start is not None:
        bands.append((start, len(active)))
    bands = [b for b in bands if b[1] - b[0] >= MIN_BAND_WIDTH_PX]
    if len(bands) > max_bands:
        bands.sort(key=lambda b: -profile[b[0] : b[1]].sum())
        bands = sorted(bands[:max_bands])
    return bands


def _row_extent(fg_band: np.ndarray) -> tuple[int, int] | None:
    """Largest contiguous run of rows whose mass clears the row cut.

    Taking the largest run (not the full span) cuts a finger at its
    distal crease when a joint blob sits below a near-empty gap.
    """
    rows = fg_band.sum(axis=1).astype(np.float64)
    if rows.max() <= 0:
        return None
    active = rows > ROW_EXTENT_FRACTION * rows.max()
    best = None
    start = None
    for i, on in enumerate(active):
        if on and start is None:
            start = i
        elif not on and start is not None:
            if best is None or (i - start) > (best[1] - best[0]):
                best = (start, i)
            start = None
    if start is not None and (best is None or (len(active) - start) > (best[1] - best[0])):
        best = (start, len(active))
    return best


def baseline_segment(img: GrayImage) -> BaselineResult:
    """Upright-rotate, split column bands, measure per-band row extents."""
    angle, degenerate = estimate_rotation(img)
    upright = rotate_image(img, -angle)
    fg = binarize(upright)

    cols = _smooth(fg.sum(axis=0).astype(np.float64), max(1, int(upright.width * SMOOTH_WINDOW_FRACTION)))
    bands = _find_bands(cols, max_bands=4)

    boxes: list[Box] = []
    masses: list[float] = []
    for x0, x1 in bands:
        extent = _row_extent(fg[:, x0:x1])
        if extent is None:
            continue
        y0, y1 = extent
        band = fg[y0:y1, x0:x1]
        cols_in = np.nonzero(band.any(axis=0))[0]
        if len(cols_in) == 0:
            continue
        left = x0 + int(cols_in[0])
        right = x0 + int(cols_in[-1]) + 1
        boxes.append(Box(float(left), float(y0), float(right), float(y1)))
        masses.append(float(band.sum()))

    if len(boxes) < 2:
        # fall back to one low-confidence box over the whole foreground
        ys, xs = np.nonzero(fg)
        if len(xs) == 0:
            return BaselineResult(angle=angle, boxes=(), confidences=(), degenerate_rotation=degenerate)
        whole = Box(float(xs.min()), float(ys.min()), float(xs.max() + 1), float(ys.max() + 1))
        return BaselineResult(
            angle=angle,
            boxes=(whole,),
            confidences=(LOW_CONFIDENCE,),
            degenerate_rotation=degenerate,
        )

    top = max(masses)
    return BaselineResult(
        angle=angle,
        boxes=tuple(boxes),
        confidences=tuple(m / top for m in masses),
        degenerate_rotation=degenerate,
    )
