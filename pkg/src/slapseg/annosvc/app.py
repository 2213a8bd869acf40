"""HTTP+JSON surface of the annotation service.

Endpoints mirror the store one to one; error payloads always carry a
machine-readable code from {not_found, conflict, validation}. When a
built UI directory is supplied it is served statically under /ui.
"""

from __future__ import annotations

import io
from pathlib import Path

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .store import (
    AnnotationStore,
    BoxEdit,
    Correction,
    NotFoundError,
    StoreError,
)

STATUS_BY_CODE = {"not_found": 404, "conflict": 409, "validation": 422}


class BoxPayload(BaseModel):
    left: float
    top: float
    right: float
    bottom: float


class RotationPayload(BaseModel):
    angle: float
    annotator_id: str = Field(min_length=1)


class EditPayload(BaseModel):
    index: int
    box: BoxPayload
    label: str | None = None


class BoxesPayload(BaseModel):
    base_version: int
    annotator_id: str = Field(min_length=1)
    edits: list[EditPayload]


def task_json(task) -> dict:
    return {
        "slap_id": task.slap_id,
        "subject_id": task.subject_id,
        "cohort": task.cohort,
        "hand": task.hand,
        "stage": task.stage,
        "version": task.version,
        "proposed_angle": task.proposed_angle,
        "verified_angle": task.verified_angle,
        "capture_size": list(task.capture_size),
        "image_url": f"/slaps/{task.slap_id}/image",
        "proposals": [
            {
                "box": {
                    "left": p.box[0],
                    "top": p.box[1],
                    "right": p.box[2],
                    "bottom": p.box[3],
                },
                "label": p.label,
                "source": p.source,
            }
            for p in task.proposals
        ],
    }


def create_app(store: AnnotationStore, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="slap annotation service")

    @app.exception_handler(StoreError)
    async def store_error_handler(request: Request, exc: StoreError):
        return JSONResponse(
            status_code=STATUS_BY_CODE.get(exc.code, 400),
            content={"code": exc.code, "message": str(exc)},
        )

    @app.get("/tasks")
    def list_tasks(
        stage: str | None = None,
        cohort: str | None = None,
        cursor: str | None = None,
        limit: int = Query(default=50, ge=1, le=500),
    ):
        rows, next_cursor = store.list_tasks(stage=stage, cohort=cohort, cursor=cursor, limit=limit)
        return {"tasks": rows, "next_cursor": next_cursor}

    @app.get("/tasks/{slap_id}")
    def get_task(slap_id: str):
        return task_json(store.get_task(slap_id))

    @app.get("/slaps/{slap_id}/image")
    def get_image(slap_id: str):
        task = store.get_task(slap_id)
        path = Path(task.image_path)
        if not path.is_file():
            raise NotFoundError(f"image file missing for {slap_id!r}")
        if path.suffix.lower() == ".png":
            return Response(content=path.read_bytes(), media_type="image/png")
        # transcode anything else to PNG for the browser
        from PIL import Image

        buf = io.BytesIO()
        with Image.open(path) as img:
            img.convert("L").save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/tasks/{slap_id}/rotation")
    def submit_rotation(slap_id: str, payload: RotationPayload):
        version = store.submit_rotation(slap_id, payload.angle, payload.annotator_id)
        return {"slap_id": slap_id, "version": version, "stage": store.get_task(slap_id).stage}

    @app.post("/tasks/{slap_id}/boxes")
    def submit_boxes(slap_id: str, payload: BoxesPayload):
        correction = Correction(
            base_version=payload.base_version,
            annotator_id=payload.annotator_id,
            edits=[
                BoxEdit(
                    index=e.index,
                    box=(e.box.left, e.box.top, e.box.right, e.box.bottom),
                    label=e.label,
                )
                for e in payload.edits
            ],
        )
        version = store.submit_boxes(slap_id, correction)
        return {"slap_id": slap_id, "version": version, "stage": store.get_task(slap_id).stage}

    @app.get("/export")
    def export():
        import json as _json

        # written into the data directory so relative paths stay resolvable
        out = store.data_dir / "export_manifest.json"
        store.export_manifest(out)
        return _json.loads(out.read_text())

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
