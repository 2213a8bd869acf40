"""Genuine/impostor matching protocol, toy correlation scorer, ROC."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from ..imgcore import Box, GrayImage, roi_align

MATCH_FRAME = 128  # crops are resampled to this square before scoring
LOCAL_MEAN_WINDOW = 21  # ridge-structure high-pass; kills shared envelope shading
INTERIOR_DISC = 0.85    # fraction of the frame radius scored; excludes the contour
IMPOSTORS_PER_PRINT = 20


@dataclass(frozen=True)
class PrintRecord:
    """One segmented fingerprint crop with its identity."""

    print_id: str
    finger_key: tuple  # (subject, hand, finger label); same key = mated
    crop: GrayImage


@dataclass(frozen=True)
class MatchTrial:
    probe_id: str
    gallery_id: str
    score: float
    kind: str  # genuine | impostor


def crop_box(img: GrayImage, box: Box) -> GrayImage:
    """Integer-aligned crop of the box, clipped to the raster."""
    left = max(int(np.floor(box.left)), 0)
    top = max(int(np.floor(box.top)), 0)
    right = min(int(np.ceil(box.right)), img.width)
    bottom = min(int(np.ceil(box.bottom)), img.height)
    if right - left < 2 or bottom - top < 2:
        raise ValueError(f"crop {box.as_tuple()} degenerate within {img.size}")
    return GrayImage(img.pixels[top:bottom, left:right].copy(), ppi=img.ppi)


def resample_to_frame(crop: GrayImage, frame: int = MATCH_FRAME) -> np.ndarray:
    """Bilinear resample to a common square frame (float array)."""
    full = Box(0.0, 0.0, float(crop.width), float(crop.height))
    return roi_align(crop.pixels.astype(np.float64), full, frame, samples_per_bin=1)


_DISC_CACHE: dict[int, np.ndarray] = {}


def _interior_disc(frame: int) -> np.ndarray:
    mask = _DISC_CACHE.get(frame)
    if mask is None:
        c = (frame - 1) / 2.0
        yy, xx = np.mgrid[0:frame, 0:frame]
        mask = (xx - c) ** 2 + (yy - c) ** 2 <= (INTERIOR_DISC * frame / 2.0) ** 2
        _DISC_CACHE[frame] = mask
    return mask


def ncc_score(a: GrayImage, b: GrayImage, return_flag: bool = False):
    """Zero-mean normalized cross-correlation at zero lag in [-1, 1].

    The mean is removed locally (sliding window) as well as globally, and
    only the interior disc of the frame is scored, so the value compares
    ridge structure rather than the envelope contour every fingerprint
    crop shares after aspect normalization. A zero-variance crop cannot
    correlate; it scores 0 and raises the degeneracy flag when asked.
    """
    from scipy import ndimage

    fa = resample_to_frame(a)
    fb = resample_to_frame(b)
    fa = fa - ndimage.uniform_filter(fa, LOCAL_MEAN_WINDOW, mode="reflect")
    fb = fb - ndimage.uniform_filter(fb, LOCAL_MEAN_WINDOW, mode="reflect")
    disc = _interior_disc(fa.shape[0])
    fa = fa[disc]
    fb = fb[disc]
    fa = fa - fa.mean()
    fb = fb - fb.mean()
    na = np.linalg.norm(fa)
    nb = np.linalg.norm(fb)
    if na < 1e-12 or nb < 1e-12:
        return (0.0, True) if return_flag else 0.0
    score = float(np.dot(fa, fb) / (na * nb))
    return (score, False) if return_flag else score


def match_protocol(
    prints: list[PrintRecord],
    scorer=ncc_score,
    impostors_per_print: int = IMPOSTORS_PER_PRINT,
    rng: np.random.Generator | None = None,
) -> list[MatchTrial]:
    """All mated pairs as genuines; fixed-size sampled non-mated gallery
    per probe as impostors. Sampling is rng-deterministic."""
    if rng is None:
        rng = np.random.default_rng(0)
    by_finger: dict[tuple, list[int]] = {}
    for i, rec in enumerate(prints):
        by_finger.setdefault(rec.finger_key, []).append(i)
    # every probe must find a full non-mated gallery to sample from
    largest = max((len(v) for v in by_finger.values()), default=0)
    if len(prints) - largest < impostors_per_print:
        raise ValueError(
            f"insufficient population: a probe has only {len(prints) - largest} "
            f"non-mated prints, needs {impostors_per_print}"
        )
    if not any(len(v) >= 2 for v in by_finger.values()):
        raise ValueError("insufficient population: no finger has two captures")

    trials: list[MatchTrial] = []
    for members in by_finger.values():
        for i, j in combinations(members, 2):
            trials.append(
                MatchTrial(
                    probe_id=prints[i].print_id,
                    gallery_id=prints[j].print_id,
                    score=float(scorer(prints[i].crop, prints[j].crop)),
                    kind="genuine",
                )
            )

    for i, rec in enumerate(prints):
        non_mated = np.asarray(
            [j for j, other in enumerate(prints) if other.finger_key != rec.finger_key]
        )
        take = rng.choice(non_mated, size=impostors_per_print, replace=False)
        for j in take:
            trials.append(
                MatchTrial(
                    probe_id=rec.print_id,
                    gallery_id=prints[int(j)].print_id,
                    score=float(scorer(rec.crop, prints[int(j)].crop)),
                    kind="impostor",
                )
            )
    return trials


@dataclass(frozen=True)
class RocReport:
    """Threshold sweep (descending) with one point per distinct score."""

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    n_genuine: int
    n_impostor: int
    tpr_at: dict[float, float] = field(default_factory=dict)


def roc(trials: list[MatchTrial]) -> RocReport:
    genuine = np.asarray([t.score for t in trials if t.kind == "genuine"])
    impostor = np.asarray([t.score for t in trials if t.kind == "impostor"])
    if len(genuine) == 0 or len(impostor) == 0:
        raise ValueError("roc needs both genuine and impostor trials")
    # predicted match iff score >= threshold; sweep from above the top
    # score (nothing accepted) down to the minimum (everything accepted)
    distinct = np.unique(np.concatenate([genuine, impostor]))[::-1]
    thresholds = np.concatenate([[distinct[0] + 1.0], distinct])
    tpr = np.array([(genuine >= t).mean() for t in thresholds])
    fpr = np.array([(impostor >= t).mean() for t in thresholds])
    return RocReport(
        thresholds=thresholds,
        fpr=fpr,
        tpr=tpr,
        n_genuine=len(genuine),
        n_impostor=len(impostor),
    )


def tpr_at_fpr(report: RocReport, fpr: float = 0.001) -> float:
    """Best TPR subject to the FPR bound."""
    ok = report.fpr <= fpr
    if not ok.any():
        return 0.0
    return float(report.tpr[ok].max())


def write_roc_csv(report: RocReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "fpr", "tpr"])
        for t, f, tp in zip(report.thresholds, report.fpr, report.tpr):
            writer.writerow([f"{t:.6f}", f"{f:.6f}", f"{tp:.6f}"])
