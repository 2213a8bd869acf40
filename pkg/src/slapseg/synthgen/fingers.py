"""Procedural single-fingerprint patches.

A fingerprint patch is a soft-thresholded cosine of a smoothly varying
phase field (concentric ridge rings around a core point plus a low
frequency perturbation) clipped to an elliptical envelope. The optional
joint blob adds a second, shorter ridge-textured ellipse below the distal
crease, mimicking a medial phalanx touching the platen.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..imgcore import GrayImage

FINGER_LABELS = ("index", "middle", "ring", "little", "thumb")

RIDGE_LEVEL = 82.0
VALLEY_LEVEL = 190.0
# tanh steepness of the ridge profile; kept gentle so the texture stays
# near band-limited and survives bilinear resampling
EDGE_SHARPNESS = 0.9

# ridge contrast decays from full strength at RIM_FADE_START of the
# elliptic radius down to RIM_FADE_FLOOR at the envelope boundary
RIM_FADE_START = 0.80
RIM_FADE_FLOOR = 0.12

# joint blob proportions relative to the distal envelope
BLOB_WIDTH_FACTOR = 0.82
BLOB_HEIGHT_FACTOR = 0.75
BLOB_GAP_FACTOR = 0.05


@dataclass(frozen=True)
class FingerSpec:
    """Geometry and texture parameters of one finger on the slap canvas."""

    center: tuple[float, float]
    width: float
    height: float
    ridge_period: float
    orientation_seed: int
    finger_label: str
    joint_blob: bool = False

    def __post_init__(self):
        if self.ridge_period < 4.0:
            raise ValueError(f"ridge_period must be >= 4 px, got {self.ridge_period}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"finger size must be positive: {self.width}x{self.height}")
        if self.finger_label not in FINGER_LABELS:
            raise ValueError(f"unknown finger label: {self.finger_label}")

    def blob_extent(self) -> float:
        """Extra patch height used by the joint blob (0 when disabled)."""
        if not self.joint_blob:
            return 0.0
        return self.height * (BLOB_GAP_FACTOR + BLOB_HEIGHT_FACTOR)

    def footprint(self) -> tuple[float, float, float, float]:
        """(left, top, right, bottom) of the rendered patch on the canvas."""
        cx, cy = self.center
        left = cx - self.width / 2.0
        top = cy - self.height / 2.0
        return (left, top, left + self.width, top + self.height + self.blob_extent())


def synth_fingerprint(spec: FingerSpec, rng_seed: int) -> tuple[GrayImage, np.ndarray]:
    """Render one fingerprint patch and its support mask.

    Deterministic in (spec, rng_seed). The returned mask marks the
    elliptical envelope, including the joint blob when enabled; the patch
    is white outside the mask.
    """
    rng = np.random.default_rng(np.random.SeedSequence([rng_seed & 0xFFFFFFFF, spec.orientation_seed & 0xFFFFFFFF]))

    pw = max(2, int(round(spec.width)))
    ph = max(2, int(round(spec.height + spec.blob_extent())))
    a = spec.width / 2.0
    b = spec.height / 2.0
    ex = pw / 2.0
    ey = b  # distal ellipse sits at the top of the patch

    jj, ii = np.meshgrid(np.arange(pw), np.arange(ph))
    x = jj + 0.5
    y = ii + 0.5

    inside = ((x - ex) / a) ** 2 + ((y - ey) / b) ** 2 <= 1.0

    if spec.joint_blob:
        gap = spec.height * BLOB_GAP_FACTOR
        bw = spec.width * BLOB_WIDTH_FACTOR / 2.0
        bh = spec.height * BLOB_HEIGHT_FACTOR / 2.0
        by = spec.height + gap + bh
        blob = ((x - ex) / bw) ** 2 + ((y - by) / bh) ** 2 <= 1.0
        mask = inside | blob
    else:
        mask = inside

    # ridge phase: elliptical rings around a core in the upper half of the
    # tip; core position, ring orientation, and eccentricity vary per seed
    # so unrelated fingers decorrelate
    core_x = ex + rng.uniform(-0.22, 0.22) * spec.width
    core_y = ey * (0.60 + rng.uniform(-0.22, 0.22))
    theta = rng.uniform(0.0, np.pi)
    ct, st = np.cos(theta), np.sin(theta)
    stretch = rng.uniform(0.95, 1.05)
    u = (x - core_x) * ct + (y - core_y) * st
    v = -(x - core_x) * st + (y - core_y) * ct
    r = np.hypot(u * stretch, v / stretch)
    phase = 2.0 * np.pi * r / spec.ridge_period
    for _ in range(4):
        wavelength = rng.uniform(26.0, 55.0)
        ux, uy = rng.uniform(-1.0, 1.0, size=2) / wavelength
        phase += rng.uniform(0.3, 0.8) * np.sin(2.0 * np.pi * (ux * x + uy * y) + rng.uniform(0, 2 * np.pi))

    profile = np.tanh(EDGE_SHARPNESS * np.cos(phase))

    # contact pressure drops toward the rim: ridges fade into the platen
    # there, while the annotated extent (the mask) still covers the full
    # envelope, the way a human boxes the finger rather than the ink
    rho = np.sqrt(((x - ex) / a) ** 2 + ((y - ey) / b) ** 2)
    if spec.joint_blob:
        rho_blob = np.sqrt(((x - ex) / bw) ** 2 + ((y - by) / bh) ** 2)
        rho = np.where(blob, rho_blob, rho)
    strength = np.clip((1.0 - rho) / (1.0 - RIM_FADE_START), 0.0, 1.0)
    strength = RIM_FADE_FLOOR + (1.0 - RIM_FADE_FLOOR) * strength

    mid = (RIDGE_LEVEL + VALLEY_LEVEL) / 2.0
    half_span = (VALLEY_LEVEL - RIDGE_LEVEL) / 2.0
    shade = mid - half_span * profile  # cos > 0 is a ridge (dark)
    shade = 255.0 - (255.0 - shade) * strength  # ink vanishes into the platen

    patch = np.full((ph, pw), 255.0)
    patch[mask] = shade[mask]
    return GrayImage(np.clip(np.rint(patch), 0, 255).astype(np.uint8)), mask
