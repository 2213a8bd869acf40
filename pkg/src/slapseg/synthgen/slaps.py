"""Slap composition: fingers on a platen canvas, noise, rotation.

Ground truth lives in the upright frame: the canvas obtained by rotating
the captured image back by the applied angle. Because rotation about the
center composed with its inverse is a pure translation, upright boxes are
composite-frame boxes shifted by a fixed offset.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..imgcore import Box, GrayImage, rotate_image, rotated_extent
from .fingers import FingerSpec, synth_fingerprint

COHORTS = ("adult", "juvenile")
HANDS = ("left", "right", "thumbs")


class GenerationError(RuntimeError):
    """Raised when a slap spec cannot be realized on its canvas."""


@dataclass(frozen=True)
class SlapSpec:
    cohort: str
    hand: str
    rotation: float
    fingers: tuple[FingerSpec, ...]
    noise_sigma: float
    canvas: tuple[int, int]  # (width, height)

    def __post_init__(self):
        if self.cohort not in COHORTS:
            raise ValueError(f"unknown cohort: {self.cohort}")
        if self.hand not in HANDS:
            raise ValueError(f"unknown hand: {self.hand}")
        expected = 2 if self.hand == "thumbs" else 4
        if len(self.fingers) != expected:
            raise ValueError(
                f"{self.hand} slap needs {expected} fingers, got {len(self.fingers)}"
            )
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass(frozen=True)
class GroundTruth:
    """Per-finger annotation of one slap, upright frame boxes."""

    boxes: tuple[Box, ...]
    labels: tuple[str, ...]
    rotation: float
    label_raster: np.ndarray = field(repr=False)  # composite frame; 0 = bg, i+1 = finger i
    composite_size: tuple[int, int]
    upright_size: tuple[int, int]
    upright_offset: tuple[float, float]

    def mask(self, index: int) -> np.ndarray:
        """Binary mask of finger ``index`` in the composite frame."""
        return self.label_raster == index + 1

    def box_in_composite(self, index: int) -> Box:
        ox, oy = self.upright_offset
        return self.boxes[index].translated(-ox, -oy)


def _mask_hull(mask: np.ndarray) -> Box:
    ys, xs = np.nonzero(mask)
    # the cell at row i / col j spans [j, j+1) x [i, i+1)
    return Box(float(xs.min()), float(ys.min()), float(xs.max() + 1), float(ys.max() + 1))


def upright_geometry(
    composite_size: tuple[int, int], rotation: float
) -> tuple[tuple[int, int], tuple[int, int], tuple[float, float]]:
    """(capture_size, upright_size, composite->upright offset) for a slap."""
    cw, ch = composite_size
    cap_w, cap_h = rotated_extent(cw, ch, rotation)
    up_w, up_h = rotated_extent(cap_w, cap_h, -rotation)
    offset = (up_w / 2.0 - cw / 2.0, up_h / 2.0 - ch / 2.0)
    return (cap_w, cap_h), (up_w, up_h), offset


def synth_slap(spec: SlapSpec, rng_seed: int) -> tuple[GrayImage, GroundTruth]:
    """Composite the fingers, add pixel noise, rotate the whole canvas.

    Raises :class:`GenerationError` when finger footprints overlap or fall
    off the canvas.
    """
    w, h = spec.canvas
    canvas = np.full((h, w), 255.0)
    raster = np.zeros((h, w), dtype=np.uint8)
    boxes_composite = []

    for idx, finger in enumerate(spec.fingers):
        patch, mask = synth_fingerprint(finger, rng_seed=finger.orientation_seed)
        ph, pw = patch.pixels.shape
        left, top, _, _ = finger.footprint()
        px0, py0 = int(round(left)), int(round(top))
        if px0 < 0 or py0 < 0 or px0 + pw > w or py0 + ph > h:
            raise GenerationError(
                f"finger {idx} ({finger.finger_label}) exceeds the {w}x{h} canvas"
            )
        region = raster[py0 : py0 + ph, px0 : px0 + pw]
        if np.any(region[mask] != 0):
            raise GenerationError(f"finger {idx} ({finger.finger_label}) overlaps another finger")
        region[mask] = idx + 1
        target = canvas[py0 : py0 + ph, px0 : px0 + pw]
        target[mask] = patch.pixels.astype(np.float64)[mask]
        boxes_composite.append(_mask_hull(raster == idx + 1))

    if spec.noise_sigma > 0:
        noise_rng = np.random.default_rng(np.random.SeedSequence([rng_seed & 0xFFFFFFFF, 0x5A9]))
        canvas = canvas + noise_rng.normal(0.0, spec.noise_sigma, size=canvas.shape)

    composite = GrayImage(np.clip(np.rint(canvas), 0, 255).astype(np.uint8))
    capture = rotate_image(composite, spec.rotation)

    _, upright_size, offset = upright_geometry(spec.canvas, spec.rotation)
    boxes_upright = tuple(b.translated(*offset) for b in boxes_composite)
    truth = GroundTruth(
        boxes=boxes_upright,
        labels=tuple(f.finger_label for f in spec.fingers),
        rotation=spec.rotation,
        label_raster=raster,
        composite_size=spec.canvas,
        upright_size=upright_size,
        upright_offset=offset,
    )
    return capture, truth
