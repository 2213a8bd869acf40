"""Side-by-side evaluation of segmenters over a test partition.

Each segmenter maps a manifest entry to boxes in the annotated upright
frame. Predictions are matched one-to-one to ground truth by greedy
max-IoU; matched pairs contribute per-side errors and labeled crops,
unmatched predictions and truths are tallied separately. The ground
truth boxes themselves run as the oracle condition.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..baseline import baseline_segment, estimate_rotation
from ..detnet import ModelParams, infer, network_from_params
from ..imgcore import Box, GrayImage, map_box_between_frames, rotate_image
from ..synthgen import DatasetManifest, SplitAssignment
from .errors import (
    SIDES,
    MaeReport,
    SideError,
    error_histogram,
    mae,
    side_errors,
    tolerance_flags,
    write_histogram_csv,
    write_mae_csv,
)
from .matching import (
    IMPOSTORS_PER_PRINT,
    PrintRecord,
    RocReport,
    crop_box,
    match_protocol,
    ncc_score,
    roc,
    tpr_at_fpr,
    write_roc_csv,
)

MATCH_MIN_IOU = 0.1  # below this a prediction cannot claim a ground truth
HISTOGRAM_BIN_PX = 8.0


class GroundTruthSegmenter:
    """Oracle condition: returns the annotated boxes themselves."""

    name = "ground_truth"

    def __call__(self, manifest: DatasetManifest, slap_id: str) -> list[Box]:
        return [ab.box for ab in manifest.slaps[slap_id].boxes]


class BaselineSegmenter:
    """Classical projection segmenter re-projected into the gt frame."""

    name = "baseline"

    def __call__(self, manifest: DatasetManifest, slap_id: str) -> list[Box]:
        entry = manifest.slaps[slap_id]
        capture = manifest.load_capture(slap_id)
        result = baseline_segment(capture)
        return [
            map_box_between_frames(b, -result.angle, -entry.rotation, capture.size)
            for b in result.boxes
        ]


class DetectorSegmenter:
    """Trained detector driven by the classical rotation estimate."""

    def __init__(self, params: ModelParams, name: str = "detector", score_threshold: float = 0.5):
        self.net = network_from_params(params)
        self.name = name
        self.score_threshold = score_threshold

    def __call__(self, manifest: DatasetManifest, slap_id: str) -> list[Box]:
        entry = manifest.slaps[slap_id]
        capture = manifest.load_capture(slap_id)
        angle, _ = estimate_rotation(capture)
        detections = infer(self.net, capture, angle, score_threshold=self.score_threshold)
        return [
            map_box_between_frames(d.upright_box, -angle, -entry.rotation, capture.size)
            for d in detections
        ]


def greedy_match(pred: list[Box], truth: list[Box]) -> list[tuple[int, int]]:
    """One-to-one (pred_idx, truth_idx) pairs by descending IoU."""
    if not pred or not truth:
        return []
    scores = np.array([[_iou(p, t) for t in truth] for p in pred])
    pairs = []
    used_p: set[int] = set()
    used_t: set[int] = set()
    order = np.argsort(-scores, axis=None)
    for flat in order:
        i, j = divmod(int(flat), len(truth))
        if scores[i, j] <= MATCH_MIN_IOU:
            break
        if i in used_p or j in used_t:
            continue
        pairs.append((i, j))
        used_p.add(i)
        used_t.add(j)
    return pairs


def _iou(a: Box, b: Box) -> float:
    from ..imgcore import iou

    return iou(a, b)


@dataclass
class ModelCohortStats:
    errors: list[SideError] = field(default_factory=list)
    flagged: dict[str, int] = field(default_factory=lambda: {s: 0 for s in SIDES})
    matched: int = 0
    unmatched_pred: int = 0
    unmatched_truth: int = 0
    slap_failures: int = 0  # wrong box count against expectation
    prints: list[PrintRecord] = field(default_factory=list)


@dataclass
class CompareReport:
    mae_reports: dict[tuple[str, str], MaeReport]
    tolerance: dict[tuple[str, str], dict[str, float]]
    roc_reports: dict[tuple[str, str], RocReport]
    tpr_at: dict[tuple[str, str], float]
    counts: dict[tuple[str, str], dict[str, int]]
    out_dir: Path | None = None


def compare_models(
    manifest: DatasetManifest,
    split: SplitAssignment,
    segmenters: list,
    scorer=ncc_score,
    out_dir: str | Path | None = None,
    impostors_per_print: int = IMPOSTORS_PER_PRINT,
    seed: int = 0,
    fpr_target: float = 0.001,
    include_ground_truth: bool = True,
) -> CompareReport:
    """Evaluate every segmenter on the split's test partition."""
    models = list(segmenters)
    if include_ground_truth and not any(getattr(s, "name", "") == "ground_truth" for s in models):
        models.insert(0, GroundTruthSegmenter())

    test_ids = split.slap_ids(manifest, "test")
    if not test_ids:
        raise ValueError("test partition is empty")

    stats: dict[tuple[str, str], ModelCohortStats] = {}
    uprights: dict[str, GrayImage] = {}
    for sid in test_ids:
        entry = manifest.slaps[sid]
        capture = manifest.load_capture(sid)
        uprights[sid] = rotate_image(capture, -entry.rotation)

    for model in models:
        for sid in test_ids:
            entry = manifest.slaps[sid]
            key = (model.name, entry.cohort)
            cell = stats.setdefault(key, ModelCohortStats())
            truth = [ab.box for ab in entry.boxes]
            labels = [ab.label for ab in entry.boxes]
            pred = model(manifest, sid)
            if len(pred) != len(truth):
                cell.slap_failures += 1
            pairs = greedy_match(pred, truth)
            cell.matched += len(pairs)
            cell.unmatched_pred += len(pred) - len(pairs)
            cell.unmatched_truth += len(truth) - len(pairs)
            upright = uprights[sid]
            for pi, ti in pairs:
                err = side_errors(pred[pi], truth[ti])
                cell.errors.append(err)
                flags = tolerance_flags(err)
                for side in SIDES:
                    if getattr(flags, side):
                        cell.flagged[side] += 1
                try:
                    crop = crop_box(upright, pred[pi])
                except ValueError:
                    cell.slap_failures += 1
                    continue
                cell.prints.append(
                    PrintRecord(
                        print_id=f"{sid}:{labels[ti]}",
                        finger_key=(entry.subject_id, entry.hand, labels[ti]),
                        crop=crop,
                    )
                )

    mae_reports = {}
    tolerance = {}
    roc_reports = {}
    tpr_values = {}
    counts = {}
    for key, cell in stats.items():
        counts[key] = {
            "matched": cell.matched,
            "unmatched_pred": cell.unmatched_pred,
            "unmatched_truth": cell.unmatched_truth,
            "slap_failures": cell.slap_failures,
        }
        if cell.errors:
            mae_reports[key] = mae(cell.errors)
            n = len(cell.errors)
            tolerance[key] = {side: cell.flagged[side] / n for side in SIDES}
        rng = np.random.default_rng(seed)
        try:
            trials = match_protocol(cell.prints, scorer, impostors_per_print, rng)
            roc_reports[key] = roc(trials)
            tpr_values[key] = tpr_at_fpr(roc_reports[key], fpr_target)
        except ValueError:
            pass  # population too small for the protocol; counts still reported

    report = CompareReport(
        mae_reports=mae_reports,
        tolerance=tolerance,
        roc_reports=roc_reports,
        tpr_at=tpr_values,
        counts=counts,
        out_dir=Path(out_dir) if out_dir else None,
    )
    if out_dir is not None:
        write_report_bundle(report, stats, out_dir, fpr_target)
    return report


def write_report_bundle(
    report: CompareReport,
    stats: dict[tuple[str, str], ModelCohortStats],
    out_dir: str | Path,
    fpr_target: float,
) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_mae_csv(report.mae_reports, out / "mae_table.csv")
    for (model, cohort), cell in stats.items():
        if cell.errors:
            edges, hist_counts = error_histogram(cell.errors, "bottom", HISTOGRAM_BIN_PX)
            write_histogram_csv(edges, hist_counts, out / f"{model}_{cohort}_bottom_hist.csv")
        if (model, cohort) in report.roc_reports:
            write_roc_csv(report.roc_reports[(model, cohort)], out / f"{model}_{cohort}_roc.csv")

    doc = {
        "fpr_target": fpr_target,
        "cells": [
            {
                "model": model,
                "cohort": cohort,
                "counts": report.counts.get((model, cohort), {}),
                "mae": report.mae_reports[(model, cohort)].row()
                if (model, cohort) in report.mae_reports
                else None,
                "tolerance_flag_rates": report.tolerance.get((model, cohort)),
                "tpr_at_fpr": report.tpr_at.get((model, cohort)),
            }
            for (model, cohort) in sorted(report.counts)
        ],
    }
    (out / "report.json").write_text(json.dumps(doc, indent=1, sort_keys=True))
