import threading
from concurrent.futures import ThreadPoolExecutor

import pytest
from fastapi.testclient import TestClient

from slapseg.annosvc import (
    AnnotationStore,
    BoxEdit,
    ConflictError,
    Correction,
    NotFoundError,
    ValidationError,
    create_app,
)
from slapseg.synthgen import generate_dataset, read_manifest


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("annods")
    manifest = generate_dataset(2, 2, 2, master_seed=13, out_dir=out)
    return out, manifest


@pytest.fixture()
def store(dataset, tmp_path):
    _, manifest = dataset
    s = AnnotationStore(tmp_path / "store")
    s.ingest_manifest(manifest)
    return s


def first_id(store):
    rows, _ = store.list_tasks()
    return rows[0]["slap_id"]


class TestIngestAndQueries:
    def test_fresh_task_state(self, store):
        task = store.get_task(first_id(store))
        assert task.stage == "rotation_review"
        assert task.version == 0
        assert all(p.source == "baseline" for p in task.proposals)

    def test_unknown_id_not_found(self, store):
        with pytest.raises(NotFoundError):
            store.get_task("nope")

    def test_reingest_is_idempotent(self, dataset, store):
        _, manifest = dataset
        assert store.ingest_manifest(manifest) == 0

    def test_stage_filter(self, store):
        sid = first_id(store)
        store.submit_rotation(sid, 3.0, "ann1")
        rows, _ = store.list_tasks(stage="box_review")
        assert [r["slap_id"] for r in rows] == [sid]

    def test_paging_covers_everything_once(self, store):
        seen = []
        cursor = None
        while True:
            rows, cursor = store.list_tasks(limit=3, cursor=cursor)
            seen += [r["slap_id"] for r in rows]
            if cursor is None:
                break
        all_rows, _ = store.list_tasks(limit=500)
        assert seen == [r["slap_id"] for r in all_rows]
        assert len(seen) == len(set(seen)) == 8


class TestRotationStage:
    def test_same_angle_keeps_boxes(self, store):
        sid = first_id(store)
        before = [p.box for p in store.get_task(sid).proposals]
        store.submit_rotation(sid, store.get_task(sid).proposed_angle, "ann1")
        task = store.get_task(sid)
        assert task.stage == "box_review"
        assert [p.box for p in task.proposals] == before

    def test_angle_change_reprojects(self, store):
        sid = first_id(store)
        before = [p.box for p in store.get_task(sid).proposals]
        store.submit_rotation(sid, store.get_task(sid).proposed_angle + 5.0, "ann1")
        after = [p.box for p in store.get_task(sid).proposals]
        assert before != after

    def test_double_submit_conflicts(self, store):
        sid = first_id(store)
        store.submit_rotation(sid, 1.0, "ann1")
        with pytest.raises(ConflictError):
            store.submit_rotation(sid, 2.0, "ann1")


class TestBoxStage:
    def _to_review(self, store, sid):
        store.submit_rotation(sid, store.get_task(sid).proposed_angle, "ann1")
        return store.get_task(sid)

    def test_sparse_edit_leaves_others(self, store):
        sid = first_id(store)
        task = self._to_review(store, sid)
        before = [p.box for p in task.proposals]
        new_box = (before[0][0] + 2, before[0][1] + 2, before[0][2] + 4, before[0][3] + 4)
        store.submit_boxes(
            sid,
            Correction(base_version=task.version, annotator_id="ann2",
                       edits=[BoxEdit(index=0, box=new_box)]),
        )
        after = store.get_task(sid)
        assert after.proposals[0].box == new_box
        assert after.proposals[0].source == "human"
        for i in range(1, len(before)):
            assert after.proposals[i].box == before[i]

    def test_stale_version_conflict_leaves_store(self, store):
        sid = first_id(store)
        task = self._to_review(store, sid)
        good = Correction(base_version=task.version, annotator_id="a",
                          edits=[BoxEdit(index=0, box=task.proposals[0].box)])
        store.submit_boxes(sid, good)
        stale = Correction(base_version=task.version, annotator_id="b", edits=[])
        with pytest.raises(ConflictError):
            store.submit_boxes(sid, stale)

    def test_invalid_box_rejected(self, store):
        sid = first_id(store)
        task = self._to_review(store, sid)
        bad = Correction(base_version=task.version, annotator_id="a",
                         edits=[BoxEdit(index=0, box=(50.0, 10.0, 40.0, 60.0))])
        with pytest.raises(ValidationError):
            store.submit_boxes(sid, bad)
        assert store.get_task(sid).version == task.version

    def test_racing_submissions_exactly_one_wins(self, store):
        sid = first_id(store)
        task = self._to_review(store, sid)
        base = task.version
        barrier = threading.Barrier(2)

        def submit(tag):
            barrier.wait()
            try:
                store.submit_boxes(
                    sid,
                    Correction(base_version=base, annotator_id=tag, edits=[]),
                )
                return "ok"
            except ConflictError:
                return "conflict"

        with ThreadPoolExecutor(2) as pool:
            results = sorted(pool.map(submit, ["a", "b"]))
        assert results == ["conflict", "ok"]


class TestPersistence:
    def test_log_replay_rebuilds_state(self, store, tmp_path):
        sid = first_id(store)
        store.submit_rotation(sid, 4.0, "ann1")
        task = store.get_task(sid)
        store.submit_boxes(
            sid,
            Correction(base_version=task.version, annotator_id="ann2",
                       edits=[BoxEdit(index=0, box=task.proposals[0].box, label="middle")]),
        )
        reopened = AnnotationStore(store.data_dir)
        assert sorted(reopened._tasks) == sorted(store._tasks)
        for k in store._tasks:
            assert reopened._tasks[k] == store._tasks[k]

    def test_snapshot_plus_tail_replay(self, dataset, tmp_path, monkeypatch):
        import slapseg.annosvc.store as store_mod

        monkeypatch.setattr(store_mod, "SNAPSHOT_EVERY", 5)
        _, manifest = dataset
        s = AnnotationStore(tmp_path / "snapstore")
        s.ingest_manifest(manifest)  # 8 ingest events -> snapshot at 5
        sid = first_id(s)
        s.submit_rotation(sid, 2.0, "x")
        assert (tmp_path / "snapstore" / "snapshot.json").exists()
        reopened = AnnotationStore(tmp_path / "snapstore")
        assert reopened._tasks[sid] == s._tasks[sid]


class TestExport:
    def test_export_round_trips(self, store, tmp_path):
        ids = [r["slap_id"] for r in store.list_tasks(limit=500)[0]]
        for sid in ids[:3]:
            store.submit_rotation(sid, store.get_task(sid).proposed_angle, "a")
            task = store.get_task(sid)
            store.submit_boxes(sid, Correction(base_version=task.version, annotator_id="a", edits=[]))
        out = tmp_path / "export" / "manifest.json"
        out.parent.mkdir()
        store.export_manifest(out)
        manifest = read_manifest(out)
        assert len(manifest.slaps) == 3
        for entry in manifest.slaps.values():
            assert all(ab.source == "human" for ab in entry.boxes)

    def test_nothing_done_warns_and_exports_empty(self, store, tmp_path):
        out = tmp_path / "m.json"
        manifest = store.export_manifest(out)
        assert manifest.slaps == {}
        assert read_manifest(out).slaps == {}


class TestHttpApi:
    @pytest.fixture()
    def client(self, store):
        return TestClient(create_app(store))

    def test_task_lifecycle(self, client, store):
        sid = first_id(store)
        r = client.get(f"/tasks/{sid}")
        assert r.status_code == 200
        body = r.json()
        assert body["stage"] == "rotation_review"

        r = client.post(f"/tasks/{sid}/rotation", json={"angle": 2.0, "annotator_id": "a"})
        assert r.status_code == 200
        assert r.json()["stage"] == "box_review"

        task = client.get(f"/tasks/{sid}").json()
        box = task["proposals"][0]["box"]
        edited = {
            "left": box["left"] + 1,
            "top": box["top"] + 1,
            "right": box["right"] + 3,
            "bottom": box["bottom"] + 3,
        }
        r = client.post(
            f"/tasks/{sid}/boxes",
            json={
                "base_version": task["version"],
                "annotator_id": "b",
                "edits": [{"index": 0, "box": edited, "label": "middle"}],
            },
        )
        assert r.status_code == 200
        assert r.json()["stage"] == "done"

    def test_error_codes(self, client, store):
        r = client.get("/tasks/missing")
        assert r.status_code == 404
        assert r.json()["code"] == "not_found"

        sid = first_id(store)
        r = client.post(f"/tasks/{sid}/boxes",
                        json={"base_version": 0, "annotator_id": "x", "edits": []})
        assert r.status_code == 409  # still in rotation_review
        assert r.json()["code"] == "conflict"

    def test_image_endpoint_serves_png(self, client, store):
        sid = first_id(store)
        r = client.get(f"/slaps/{sid}/image")
        assert r.status_code == 200
        assert r.headers["content-type"] == "image/png"
        assert r.content[:8] == b"\x89PNG\r\n\x1a\n"

    def test_tasks_listing(self, client):
        r = client.get("/tasks", params={"limit": 3})
        assert r.status_code == 200
        body = r.json()
        assert len(body["tasks"]) == 3
        assert body["next_cursor"] == body["tasks"][-1]["slap_id"]

    def test_export_endpoint(self, client, store):
        sid = first_id(store)
        client.post(f"/tasks/{sid}/rotation", json={"angle": 1.0, "annotator_id": "a"})
        v = client.get(f"/tasks/{sid}").json()["version"]
        client.post(f"/tasks/{sid}/boxes",
                    json={"base_version": v, "annotator_id": "a", "edits": []})
        r = client.get("/export")
        assert r.status_code == 200
        assert sid in r.json()["slaps"]
