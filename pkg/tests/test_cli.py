import json

import pytest

from slapseg.cli import build_parser, main


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("clids")
    rc = main([
        "gen", "--adults", "10", "--juveniles", "10", "--per-subject", "2",
        "--seed", "7", "-o", str(out),
    ])
    assert rc == 0
    rc = main(["split", "--manifest", str(out / "manifest.json"), "--folds", "10", "--seed", "1"])
    assert rc == 0
    return out


class TestGenSplit:
    def test_outputs_exist(self, dataset):
        assert (dataset / "manifest.json").is_file()
        assert (dataset / "splits.json").is_file()
        assert (dataset / "run_config_gen.json").is_file()

    def test_gen_requires_seed(self, tmp_path, capsys):
        rc = main(["gen", "--adults", "1", "--juveniles", "1", "-o", str(tmp_path)])
        assert rc == 2

    def test_counts(self, dataset):
        doc = json.loads((dataset / "manifest.json").read_text())
        assert len(doc["slaps"]) == 40

    def test_identical_seeds_identical_manifests(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            rc = main([
                "gen", "--adults", "2", "--juveniles", "2", "--per-subject", "1",
                "--seed", "3", "-o", str(out),
            ])
            assert rc == 0
        assert (a / "manifest.json").read_text() == (b / "manifest.json").read_text()


class TestBaselineCommand:
    def test_writes_boxes_json(self, dataset, tmp_path):
        image = next((dataset / "images").glob("*.png"))
        out = tmp_path / "boxes.json"
        rc = main(["baseline", "-o", str(out), str(image)])
        assert rc == 0
        doc = json.loads(out.read_text())
        entry = doc[str(image)]
        assert "angle" in entry
        assert len(entry["boxes"]) >= 1


class TestUsageErrors:
    def test_unknown_flag(self):
        assert main(["gen", "--bogus"]) == 2

    def test_unknown_command(self):
        assert main(["frobnicate"]) == 2

    def test_missing_manifest_is_usage_error(self, tmp_path):
        rc = main(["split", "--manifest", str(tmp_path / "nope.json")])
        assert rc == 2

    def test_help_exits_zero(self):
        assert main(["--help"]) == 0


def test_every_flag_documented():
    parser = build_parser()
    # every subparser action must carry help text
    sub = next(a for a in parser._actions if hasattr(a, "choices") and a.choices)
    for name, sp in sub.choices.items():
        for action in sp._actions:
            if action.dest == "help":
                continue
            assert action.help, f"{name}: flag {action.option_strings or action.dest} lacks help"


class TestExportCommand:
    def test_export_after_service_edits(self, dataset, tmp_path):
        from slapseg.annosvc import AnnotationStore, Correction
        from slapseg.synthgen import read_manifest

        store_dir = tmp_path / "store"
        store = AnnotationStore(store_dir)
        manifest = read_manifest(dataset / "manifest.json")
        store.ingest_manifest(manifest)
        sid = store.list_tasks()[0][0]["slap_id"]
        store.submit_rotation(sid, store.get_task(sid).proposed_angle, "a")
        task = store.get_task(sid)
        store.submit_boxes(sid, Correction(base_version=task.version, annotator_id="a", edits=[]))

        out = tmp_path / "exported" / "manifest.json"
        rc = main(["export", "--data-dir", str(store_dir), "-o", str(out)])
        assert rc == 0
        exported = read_manifest(out)
        assert sid in exported.slaps
