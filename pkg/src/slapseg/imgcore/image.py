"""8-bit grayscale raster type, rotation, and PNG/PGM persistence.

Rotation semantics used throughout the toolkit: ``rotate_image(img, a)``
turns the content by ``a`` degrees (y-down convention: positive turns +x
towards +y), the output canvas grows to contain the rotated extent, and
the input center maps to the output center. A point q of the input lands
at ``R(a) @ (q - c_in) + c_out``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import Box

BACKGROUND = 255  # scanner platen background: bright, ridge-free

DEFAULT_PPI = 500.0


@dataclass(frozen=True)
class GrayImage:
    """Single-channel 8-bit raster with capture resolution metadata."""

    pixels: np.ndarray
    ppi: float = DEFAULT_PPI

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"pixels must be a 2-D raster, got shape {px.shape}")
        if px.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {px.dtype}")
        if not self.ppi > 0:
            raise ValueError(f"ppi must be positive, got {self.ppi}")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def size(self) -> tuple[int, int]:
        return (self.width, self.height)

    def bounds_box(self) -> Box:
        return Box(0.0, 0.0, float(self.width), float(self.height))


def save_image(img: GrayImage, path: str | Path) -> None:
    """Write as PNG or binary PGM (P5) depending on the file suffix."""
    path = Path(path)
    pil = Image.fromarray(img.pixels, mode="L")
    suffix = path.suffix.lower()
    if suffix == ".png":
        pil.save(path, format="PNG")
    elif suffix == ".pgm":
        pil.save(path, format="PPM")
    else:
        raise ValueError(f"unsupported image suffix: {path.suffix}")


def load_image(path: str | Path, ppi: float = DEFAULT_PPI) -> GrayImage:
    """Read an 8-bit grayscale PNG or PGM; ppi comes from the caller."""
    with Image.open(path) as pil:
        arr = np.asarray(pil.convert("L"), dtype=np.uint8)
    return GrayImage(arr.copy(), ppi=ppi)


def rotated_extent(width: int, height: int, angle_deg: float) -> tuple[int, int]:
    """Canvas size needed to contain a width x height image rotated by angle.

    A tiny slack is subtracted before the ceil so that angles which are
    exact quarter turns do not grow the canvas through floating point dust.
    """
    rad = math.radians(angle_deg)
    c, s = abs(math.cos(rad)), abs(math.sin(rad))
    out_w = math.ceil(width * c + height * s - 1e-9)
    out_h = math.ceil(width * s + height * c - 1e-9)
    return (max(out_w, 1), max(out_h, 1))


def rotate_image(img: GrayImage, angle_deg: float) -> GrayImage:
    """Rotate about the image center with bilinear resampling.

    The output canvas is sized by :func:`rotated_extent`; samples falling
    outside the source raster read as white (255).
    """
    if not math.isfinite(angle_deg):
        raise ValueError(f"angle must be finite, got {angle_deg}")
    h, w = img.pixels.shape
    out_w, out_h = rotated_extent(w, h, angle_deg)
    rad = math.radians(angle_deg)
    c, s = math.cos(rad), math.sin(rad)

    # inverse map: output pixel center -> input continuous coordinates
    xs = np.arange(out_w, dtype=np.float64) + 0.5 - out_w / 2.0
    ys = np.arange(out_h, dtype=np.float64) + 0.5 - out_h / 2.0
    gx, gy = np.meshgrid(xs, ys)
    src_x = c * gx + s * gy + w / 2.0
    src_y = -s * gx + c * gy + h / 2.0

    out = _bilinear_sample(img.pixels, src_x - 0.5, src_y - 0.5, fill=BACKGROUND)
    return GrayImage(np.clip(np.rint(out), 0, 255).astype(np.uint8), ppi=img.ppi)


def _bilinear_sample(
    arr: np.ndarray, u: np.ndarray, v: np.ndarray, fill: float
) -> np.ndarray:
    """Bilinear lookup at array coordinates (u=col, v=row); out of range
    samples blend towards ``fill``."""
    h, w = arr.shape
    a = arr.astype(np.float64)
    u0 = np.floor(u).astype(np.int64)
    v0 = np.floor(v).astype(np.int64)
    fu = u - u0
    fv = v - v0

    def fetch(vi, ui):
        inside = (ui >= 0) & (ui < w) & (vi >= 0) & (vi < h)
        vals = np.full(ui.shape, float(fill))
        vals[inside] = a[vi[inside], ui[inside]]
        return vals

    p00 = fetch(v0, u0)
    p01 = fetch(v0, u0 + 1)
    p10 = fetch(v0 + 1, u0)
    p11 = fetch(v0 + 1, u0 + 1)
    top = p00 * (1 - fu) + p01 * fu
    bot = p10 * (1 - fu) + p11 * fu
    return top * (1 - fv) + bot * fv


def frame_center(width: int, height: int, angle_deg: float) -> tuple[float, float]:
    """Center of the canvas produced by rotating a width x height capture."""
    fw, fh = rotated_extent(width, height, angle_deg)
    return (fw / 2.0, fh / 2.0)


def map_box_between_frames(
    box: Box,
    from_angle: float,
    to_angle: float,
    capture_size: tuple[int, int],
) -> Box:
    """Re-project a box between two rotated views of the same capture.

    Frame "a" is the canvas of ``rotate_image(capture, a)`` (frame 0 is the
    capture itself). Corner points are pushed through the full chain and
    hulled once, so the growth matches a single ``rotate_box`` call by the
    angle difference.
    """
    w, h = capture_size
    rad = math.radians(to_angle - from_angle)
    c, s = math.cos(rad), math.sin(rad)
    fcx, fcy = frame_center(w, h, from_angle)
    tcx, tcy = frame_center(w, h, to_angle)
    xs = []
    ys = []
    for x, y in (
        (box.left, box.top),
        (box.right, box.top),
        (box.right, box.bottom),
        (box.left, box.bottom),
    ):
        dx, dy = x - fcx, y - fcy
        xs.append(tcx + c * dx - s * dy)
        ys.append(tcy + s * dx + c * dy)
    return Box(min(xs), min(ys), max(xs), max(ys))
