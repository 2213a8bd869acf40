"""Per-side signed box errors, aggregate error tables, tolerance flags.

Sign convention: a detected side that captures more than the ground
truth side (extends outward) is a positive error; capturing less is
negative. The under-segmentation tolerance limits are 32 px on the
lateral sides and 64 px on top/bottom, with the boundary value itself
still tolerable.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..imgcore import Box

SIDES = ("left", "top", "right", "bottom")

SIDE_LIMIT = 32.0       # left/right under-segmentation allowance, px
VERTICAL_LIMIT = 64.0   # top/bottom under-segmentation allowance, px


@dataclass(frozen=True)
class SideError:
    left: float
    top: float
    right: float
    bottom: float

    def __post_init__(self):
        for side in SIDES:
            if not math.isfinite(getattr(self, side)):
                raise ValueError(f"{side} error is not finite")

    def as_dict(self) -> dict[str, float]:
        return {side: getattr(self, side) for side in SIDES}


def side_errors(detected: Box, truth: Box) -> SideError:
    return SideError(
        left=truth.left - detected.left,
        top=truth.top - detected.top,
        right=detected.right - truth.right,
        bottom=detected.bottom - truth.bottom,
    )


@dataclass(frozen=True)
class MaeReport:
    """Mean and standard deviation of absolute per-side errors."""

    mean: dict[str, float]
    std: dict[str, float]
    count: int

    def row(self) -> dict[str, float | int]:
        out: dict[str, float | int] = {"count": self.count}
        for side in SIDES:
            out[f"{side}_mae"] = self.mean[side]
            out[f"{side}_std"] = self.std[side]
        return out


def mae(errors: list[SideError]) -> MaeReport:
    if not errors:
        raise ValueError("mae needs at least one error record")
    table = np.asarray([[abs(getattr(e, side)) for side in SIDES] for e in errors])
    means = table.sum(axis=0) / len(errors)
    stds = table.std(axis=0)
    return MaeReport(
        mean={side: float(means[i]) for i, side in enumerate(SIDES)},
        std={side: float(stds[i]) for i, side in enumerate(SIDES)},
        count=len(errors),
    )


@dataclass(frozen=True)
class ToleranceFlags:
    """Per-side under-segmentation-beyond-limit flags."""

    left: bool
    top: bool
    right: bool
    bottom: bool
    side_limit: float = SIDE_LIMIT
    vertical_limit: float = VERTICAL_LIMIT

    @property
    def any(self) -> bool:
        return self.left or self.top or self.right or self.bottom


def tolerance_flags(e: SideError) -> ToleranceFlags:
    """Strictly-beyond rule: the limit value itself stays tolerable."""
    return ToleranceFlags(
        left=e.left < -SIDE_LIMIT,
        right=e.right < -SIDE_LIMIT,
        top=e.top < -VERTICAL_LIMIT,
        bottom=e.bottom < -VERTICAL_LIMIT,
    )


def error_histogram(
    errors: list[SideError], side: str, bin_width: float
) -> tuple[np.ndarray, np.ndarray]:
    """(bin_edges, counts) covering the observed range of one side."""
    if side not in SIDES:
        raise ValueError(f"unknown side: {side}")
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    values = np.asarray([getattr(e, side) for e in errors], dtype=np.float64)
    if len(values) == 0:
        return np.array([0.0, bin_width]), np.array([0])
    lo = math.floor(values.min() / bin_width) * bin_width
    hi = math.ceil(values.max() / bin_width) * bin_width
    if hi <= lo:
        hi = lo + bin_width
    edges = np.arange(lo, hi + bin_width / 2, bin_width)
    counts, _ = np.histogram(values, bins=edges)
    return edges, counts


def write_histogram_csv(edges: np.ndarray, counts: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_low", "bin_high", "count"])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            writer.writerow([f"{lo:.1f}", f"{hi:.1f}", int(c)])


def write_mae_csv(reports: dict[tuple[str, str], MaeReport], path: str | Path) -> None:
    """Rows of (model, cohort) MAE cells, 4 sides each."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["model", "cohort", "count"]
        for side in SIDES:
            header += [f"{side}_mae", f"{side}_std"]
        writer.writerow(header)
        for (model, cohort), report in sorted(reports.items()):
            row = [model, cohort, report.count]
            for side in SIDES:
                row += [f"{report.mean[side]:.3f}", f"{report.std[side]:.3f}"]
            writer.writerow(row)
