"""Identity-disjoint cross-validation folds.

Subjects of each cohort are shuffled once (seeded) and cut into
``folds`` near-equal groups; fold k tests group k, validates group
k+1 (mod folds), and trains on the rest. Every subject is therefore
tested in exactly one fold, and the 80/10/10 split holds per cohort up
to rounding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import DatasetManifest

SPLITS_FORMAT = "slapseg-splits/1"

PARTITIONS = ("train", "validation", "test")


@dataclass
class SplitAssignment:
    fold: int
    partition: dict[str, str]  # subject_id -> train|validation|test

    def subjects(self, part: str) -> list[str]:
        if part not in PARTITIONS:
            raise ValueError(f"unknown partition: {part}")
        return sorted(s for s, p in self.partition.items() if p == part)

    def slap_ids(self, manifest: DatasetManifest, part: str) -> list[str]:
        wanted = set(self.subjects(part))
        return sorted(
            sid for sid, e in manifest.slaps.items() if e.subject_id in wanted
        )


def make_splits(
    manifest: DatasetManifest, folds: int = 10, seed: int = 0
) -> list[SplitAssignment]:
    if folds < 2:
        raise ValueError("folds must be >= 2")
    by_cohort: dict[str, list[str]] = {"adult": [], "juvenile": []}
    for rec in manifest.subjects:
        by_cohort[rec.cohort].append(rec.subject_id)

    rng = np.random.default_rng(seed)
    groups: dict[str, list[list[str]]] = {}
    for cohort, ids in by_cohort.items():
        if len(ids) < folds:
            raise ValueError(
                f"cohort {cohort!r} has {len(ids)} subjects, needs >= {folds}"
            )
        order = sorted(ids)
        rng.shuffle(order)
        # near-equal contiguous groups over the shuffled order
        sizes = [len(order) // folds + (1 if i < len(order) % folds else 0) for i in range(folds)]
        out, at = [], 0
        for size in sizes:
            out.append(order[at : at + size])
            at += size
        groups[cohort] = out

    assignments = []
    for k in range(folds):
        partition: dict[str, str] = {}
        for cohort_groups in groups.values():
            for g, members in enumerate(cohort_groups):
                if g == k:
                    part = "test"
                elif g == (k + 1) % folds:
                    part = "validation"
                else:
                    part = "train"
                for sid in members:
                    partition[sid] = part
        assignments.append(SplitAssignment(fold=k, partition=partition))
    return assignments


def write_splits(assignments: list[SplitAssignment], path: str | Path, seed: int | None = None) -> None:
    doc = {
        "format": SPLITS_FORMAT,
        "folds": len(assignments),
        "seed": seed,
        "assignments": [
            {"fold": a.fold, "partition": dict(sorted(a.partition.items()))}
            for a in assignments
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8")


def read_splits(path: str | Path) -> list[SplitAssignment]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != SPLITS_FORMAT:
        raise ValueError(f"unexpected splits format: {doc.get('format')!r}")
    return [
        SplitAssignment(fold=a["fold"], partition=dict(a["partition"]))
        for a in doc["assignments"]
    ]
