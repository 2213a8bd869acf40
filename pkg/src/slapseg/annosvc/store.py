"""Versioned annotation store backed by an append-only JSONL log.

Every slap moves forward through rotation_review -> box_review -> done.
Writes append one event and bump the slap's version by exactly 1; all
mutations pass a single commit lock, and box submissions carry the
version they were based on, so of two racing writers exactly one wins.
Replaying the log (optionally on top of a periodic snapshot) rebuilds
the identical state.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..baseline import baseline_segment, estimate_rotation
from ..imgcore import Box, map_box_between_frames, rotated_extent
from ..synthgen import (
    AnnotatedBox,
    DatasetManifest,
    SlapEntry,
    SubjectRecord,
    write_manifest,
)

STAGES = ("rotation_review", "box_review", "done")
SNAPSHOT_EVERY = 256

LEFT_TO_RIGHT_LABELS = {
    "right": ("index", "middle", "ring", "little"),
    "left": ("little", "ring", "middle", "index"),
    "thumbs": ("thumb", "thumb"),
}


class StoreError(Exception):
    code = "validation"


class NotFoundError(StoreError):
    code = "not_found"


class ConflictError(StoreError):
    code = "conflict"


class ValidationError(StoreError):
    code = "validation"


@dataclass
class Proposal:
    box: tuple[float, float, float, float]
    label: str
    source: str  # baseline | model | human

    def validate(self):
        left, top, right, bottom = self.box
        if not (left < right and top < bottom):
            raise ValidationError(f"degenerate box {self.box}")


@dataclass
class BoxEdit:
    index: int
    box: tuple[float, float, float, float]
    label: str | None = None


@dataclass
class Correction:
    base_version: int
    edits: list[BoxEdit]
    annotator_id: str


@dataclass
class TaskState:
    slap_id: str
    subject_id: str
    cohort: str
    hand: str
    image_path: str            # absolute path, resolved at ingest
    capture_size: tuple[int, int]
    composite_size: tuple[int, int]
    raster_path: str | None
    ppi: float
    stage: str = "rotation_review"
    version: int = 0
    proposed_angle: float = 0.0
    verified_angle: float | None = None
    proposals: list[Proposal] = field(default_factory=list)
    annotators: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "slap_id": self.slap_id,
            "subject_id": self.subject_id,
            "cohort": self.cohort,
            "hand": self.hand,
            "stage": self.stage,
            "version": self.version,
            "n_boxes": len(self.proposals),
        }


class AnnotationStore:
    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.data_dir / "events.jsonl"
        self.snapshot_path = self.data_dir / "snapshot.json"
        self._lock = threading.Lock()
        self._tasks: dict[str, TaskState] = {}
        self._events_applied = 0
        self._load()

    # -- persistence ---------------------------------------------------------

    def _load(self):
        start = 0
        if self.snapshot_path.exists():
            snap = json.loads(self.snapshot_path.read_text())
            start = snap["events_applied"]
            for t in snap["tasks"]:
                state = TaskState(
                    **{
                        **t,
                        "proposals": [
                            Proposal(box=tuple(p["box"]), label=p["label"], source=p["source"])
                            for p in t["proposals"]
                        ],
                    }
                )
                state.capture_size = tuple(state.capture_size)
                state.composite_size = tuple(state.composite_size)
                self._tasks[state.slap_id] = state
            self._events_applied = start
        if self.log_path.exists():
            with open(self.log_path) as fh:
                for i, line in enumerate(fh):
                    if i < start or not line.strip():
                        continue
                    self._apply(json.loads(line))
                    self._events_applied += 1

    def _append(self, event: dict):
        """Apply then persist one event; caller holds the lock."""
        self._apply(event)
        with open(self.log_path, "a") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
            fh.flush()
        self._events_applied += 1
        if self._events_applied % SNAPSHOT_EVERY == 0:
            self._write_snapshot()

    def _write_snapshot(self):
        doc = {
            "events_applied": self._events_applied,
            "tasks": [asdict(t) for t in self._tasks.values()],
        }
        tmp = self.snapshot_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(doc, sort_keys=True))
        tmp.replace(self.snapshot_path)

    def _apply(self, event: dict):
        kind = event["event"]
        if kind == "ingest":
            t = event["task"]
            state = TaskState(
                slap_id=t["slap_id"],
                subject_id=t["subject_id"],
                cohort=t["cohort"],
                hand=t["hand"],
                image_path=t["image_path"],
                capture_size=tuple(t["capture_size"]),
                composite_size=tuple(t["composite_size"]),
                raster_path=t.get("raster_path"),
                ppi=t["ppi"],
                proposed_angle=t["proposed_angle"],
                proposals=[
                    Proposal(box=tuple(p["box"]), label=p["label"], source=p["source"])
                    for p in t["proposals"]
                ],
            )
            self._tasks[state.slap_id] = state
        elif kind == "rotation":
            state = self._tasks[event["slap_id"]]
            old_angle = state.proposed_angle
            new_angle = event["angle"]
            if abs(new_angle - old_angle) > 1e-12:
                state.proposals = [
                    Proposal(
                        box=map_box_between_frames(
                            Box.from_tuple(p.box), -old_angle, -new_angle, state.capture_size
                        ).as_tuple(),
                        label=p.label,
                        source=p.source,
                    )
                    for p in state.proposals
                ]
            state.verified_angle = new_angle
            state.stage = "box_review"
            state.version = event["version"]
            state.annotators.append(event["annotator_id"])
        elif kind == "boxes":
            state = self._tasks[event["slap_id"]]
            for e in event["edits"]:
                p = state.proposals[e["index"]]
                state.proposals[e["index"]] = Proposal(
                    box=tuple(e["box"]),
                    label=e.get("label") or p.label,
                    source="human",
                )
            state.stage = "done"
            state.version = event["version"]
            state.annotators.append(event["annotator_id"])
        else:
            raise ValueError(f"unknown event kind {kind!r}")

    # -- ingest --------------------------------------------------------------

    def ingest_manifest(self, manifest: DatasetManifest, proposal_source: str = "baseline",
                        model_params=None) -> int:
        """Create tasks for manifest slaps not yet in the store.

        Proposals come from the classical segmenter, or from a trained
        detector when proposal_source is "model" (driven by the classical
        angle estimate either way).
        """
        from ..detnet import infer  # local import: annosvc stays light without a model

        count = 0
        with self._lock:
            for sid in sorted(manifest.slaps):
                if sid in self._tasks:
                    continue
                entry = manifest.slaps[sid]
                capture = manifest.load_capture(sid)
                if proposal_source == "model":
                    if model_params is None:
                        raise ValidationError("model proposal source needs model params")
                    angle, _ = estimate_rotation(capture)
                    dets = infer(model_params, capture, angle)
                    boxes = [d.upright_box for d in dets]
                    source = "model"
                else:
                    result = baseline_segment(capture)
                    angle = result.angle
                    boxes = list(result.boxes)
                    source = "baseline"
                labels = LEFT_TO_RIGHT_LABELS.get(entry.hand, ("index",) * 4)
                proposals = [
                    {
                        "box": b.as_tuple(),
                        "label": labels[i] if i < len(labels) else labels[-1],
                        "source": source,
                    }
                    for i, b in enumerate(boxes)
                ]
                self._append(
                    {
                        "event": "ingest",
                        "task": {
                            "slap_id": sid,
                            "subject_id": entry.subject_id,
                            "cohort": entry.cohort,
                            "hand": entry.hand,
                            "image_path": str(manifest.resolve(entry.image_path)),
                            "capture_size": list(entry.capture_size),
                            "composite_size": list(entry.composite_size),
                            "raster_path": str(manifest.resolve(entry.raster_path))
                            if entry.raster_path
                            else None,
                            "ppi": entry.ppi,
                            "proposed_angle": float(angle),
                            "proposals": proposals,
                        },
                        "ts": time.time(),
                    }
                )
                count += 1
        return count

    # -- queries -------------------------------------------------------------

    def list_tasks(self, stage: str | None = None, cohort: str | None = None,
                   cursor: str | None = None, limit: int = 50) -> tuple[list[dict], str | None]:
        """Stable slap_id ordering; cursor is the last id of the prior page."""
        if stage is not None and stage not in STAGES:
            raise ValidationError(f"unknown stage {stage!r}")
        with self._lock:
            ids = sorted(self._tasks)
            rows = []
            for sid in ids:
                if cursor is not None and sid <= cursor:
                    continue
                t = self._tasks[sid]
                if stage is not None and t.stage != stage:
                    continue
                if cohort is not None and t.cohort != cohort:
                    continue
                rows.append(t.summary())
                if len(rows) == limit:
                    break
            next_cursor = rows[-1]["slap_id"] if len(rows) == limit else None
            return rows, next_cursor

    def get_task(self, slap_id: str) -> TaskState:
        with self._lock:
            task = self._tasks.get(slap_id)
            if task is None:
                raise NotFoundError(f"unknown slap {slap_id!r}")
            return task

    # -- mutations -----------------------------------------------------------

    def submit_rotation(self, slap_id: str, verified_angle: float, annotator_id: str) -> int:
        if not np.isfinite(verified_angle):
            raise ValidationError("angle must be finite")
        with self._lock:
            task = self._tasks.get(slap_id)
            if task is None:
                raise NotFoundError(f"unknown slap {slap_id!r}")
            if task.stage != "rotation_review":
                raise ConflictError(f"slap {slap_id!r} is in stage {task.stage}")
            version = task.version + 1
            self._append(
                {
                    "event": "rotation",
                    "slap_id": slap_id,
                    "angle": float(verified_angle),
                    "annotator_id": annotator_id,
                    "version": version,
                    "ts": time.time(),
                }
            )
            return version

    def submit_boxes(self, slap_id: str, correction: Correction) -> int:
        with self._lock:
            task = self._tasks.get(slap_id)
            if task is None:
                raise NotFoundError(f"unknown slap {slap_id!r}")
            if task.stage != "box_review":
                raise ConflictError(f"slap {slap_id!r} is in stage {task.stage}")
            if correction.base_version != task.version:
                raise ConflictError(
                    f"stale base_version {correction.base_version}, current {task.version}"
                )
            for e in correction.edits:
                if not 0 <= e.index < len(task.proposals):
                    raise ValidationError(f"edit index {e.index} out of range")
                Proposal(box=tuple(e.box), label=e.label or "index", source="human").validate()
                if e.label is not None and e.label not in (
                    "index", "middle", "ring", "little", "thumb",
                ):
                    raise ValidationError(f"unknown finger label {e.label!r}")
            version = task.version + 1
            self._append(
                {
                    "event": "boxes",
                    "slap_id": slap_id,
                    "base_version": correction.base_version,
                    "edits": [
                        {"index": e.index, "box": list(e.box), "label": e.label}
                        for e in correction.edits
                    ],
                    "annotator_id": correction.annotator_id,
                    "version": version,
                    "ts": time.time(),
                }
            )
            return version

    # -- export --------------------------------------------------------------

    def export_manifest(self, out_path: str | Path) -> DatasetManifest:
        """Manifest of done slaps with human-confirmed boxes.

        Paths are rewritten relative to the output manifest location so
        the result round-trips through the normal reader and can seed
        training directly.
        """
        import os

        out_path = Path(out_path)
        with self._lock:
            done = [t for t in self._tasks.values() if t.stage == "done"]
            if not done:
                logging.getLogger(__name__).warning(
                    "export is empty: no slap has reached stage done"
                )
            subjects: dict[str, SubjectRecord] = {}
            slaps: dict[str, SlapEntry] = {}
            for t in sorted(done, key=lambda t: t.slap_id):
                angle = t.verified_angle if t.verified_angle is not None else t.proposed_angle
                upright_size = rotated_extent(t.capture_size[0], t.capture_size[1], -angle)
                offset = (
                    upright_size[0] / 2.0 - t.composite_size[0] / 2.0,
                    upright_size[1] / 2.0 - t.composite_size[1] / 2.0,
                )
                rec = subjects.setdefault(
                    t.subject_id, SubjectRecord(subject_id=t.subject_id, cohort=t.cohort)
                )
                rec.slap_ids.append(t.slap_id)
                slaps[t.slap_id] = SlapEntry(
                    slap_id=t.slap_id,
                    subject_id=t.subject_id,
                    cohort=t.cohort,
                    hand=t.hand,
                    image_path=os.path.relpath(t.image_path, out_path.parent),
                    image_sha256="",
                    rotation=float(angle),
                    composite_size=tuple(t.composite_size),
                    capture_size=tuple(t.capture_size),
                    upright_size=tuple(upright_size),
                    upright_offset=offset,
                    ppi=t.ppi,
                    boxes=[
                        AnnotatedBox(box=Box.from_tuple(p.box), label=p.label, source="human")
                        for p in t.proposals
                    ],
                    raster_path=os.path.relpath(t.raster_path, out_path.parent)
                    if t.raster_path
                    else None,
                )
            manifest = DatasetManifest(
                generator_seed=0,
                subjects=sorted(subjects.values(), key=lambda s: s.subject_id),
                slaps=slaps,
                root=out_path.parent,
            )
            write_manifest(manifest, out_path)
            return manifest
