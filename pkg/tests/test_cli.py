"""CLI tests: exit codes, smoke runs, reproducibility records."""

import json
from pathlib import Path

import pytest

from facekit.cli import main
from facekit.netspec import canonical_json
from facekit.profiles import load_profile, profile_to_dict


@pytest.fixture(scope="module")
def fast_profile_path(tmp_path_factory) -> str:
    """A trimmed toy profile so CLI smoke runs stay quick."""
    doc = profile_to_dict(load_profile("toy"))
    doc["seg_train"]["epochs"] = 2
    doc["attr_train"]["epochs"] = 4
    doc["patch_quota"] = 4
    path = tmp_path_factory.mktemp("profile") / "fast.json"
    path.write_text(canonical_json(doc), "utf-8")
    return str(path)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("data")
    assert main(["synth", "--n", "10", "--size", "32", "--seed", "3",
                 "--out", str(root)]) == 0
    return root


class TestExitCodes:
    def test_no_command_is_usage_error(self, capsys):
        assert main([]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_missing_required_flag(self, capsys):
        assert main(["synth"]) == 1
        err = capsys.readouterr().err
        assert "usage" in err.lower()

    def test_unknown_flag(self, capsys):
        assert main(["synth", "--n", "4", "--out", "/tmp/x", "--bogus"]) == 1

    def test_missing_data_file_is_data_error(self, tmp_path):
        assert main(["train-seg", "--data", str(tmp_path / "none.json"),
                     "--out", str(tmp_path)]) == 2

    def test_bad_profile_is_data_error(self, tmp_path, dataset):
        assert main(["train-seg", "--data", str(dataset / "manifest.json"),
                     "--profile", "missing-profile", "--out", str(tmp_path)]) == 2


class TestPipelineSmoke:
    def test_synth_created_files(self, dataset):
        manifest = json.loads((dataset / "manifest.json").read_text())
        assert len(manifest["entries"]) == 10
        assert (dataset / "run_record.json").exists()

    def test_train_seg_segment_classify(self, dataset, fast_profile_path, tmp_path, capsys):
        seg_dir = tmp_path / "seg"
        assert main(["train-seg", "--data", str(dataset / "manifest.json"),
                     "--profile", fast_profile_path, "--seed", "7",
                     "--out", str(seg_dir)]) == 0
        model = seg_dir / "seg_model.fpkt"
        assert model.exists()

        pm_dir = tmp_path / "pms"
        image = dataset / "images" / "face_0000.png"
        assert main(["segment", "--model", str(model), "--image", str(image),
                     "--profile", fast_profile_path, "--out", str(pm_dir)]) == 0
        pm_files = sorted(p.name for p in pm_dir.iterdir())
        assert "pms.fppm" in pm_files
        assert sum(1 for n in pm_files if n.startswith("pm_")) == 7

        attr_dir = tmp_path / "attr"
        assert main(["train-attr", "--data", str(dataset / "manifest.json"),
                     "--seg-model", str(model), "--profile", fast_profile_path,
                     "--seed", "7", "--out", str(attr_dir)]) == 0
        attr_model = attr_dir / "attr_model.fpkt"
        assert attr_model.exists()

        capsys.readouterr()
        assert main(["classify", "--model", str(attr_model),
                     "--seg-model", str(model), "--image", str(image),
                     "--profile", fast_profile_path]) == 0
        out = capsys.readouterr().out
        assert "label:" in out

    def test_kfold_smoke(self, dataset, fast_profile_path, tmp_path):
        out = tmp_path / "report"
        assert main(["kfold", "--data", str(dataset / "manifest.json"),
                     "--profile", fast_profile_path, "--k", "2", "--seed", "5",
                     "--out", str(out)]) == 0
        assert (out / "metrics.json").exists()
        assert (out / "confusion.png").exists()
        assert (out / "run_record.json").exists()

    def test_importance_from_masks(self, dataset, tmp_path, capsys):
        out = tmp_path / "imp"
        assert main(["importance", "--data", str(dataset / "manifest.json"),
                     "--trees", "20", "--seed", "2", "--out", str(out)]) == 0
        doc = json.loads((out / "importance.json").read_text())
        assert "ranking" in doc and len(doc["per_class"]) == 7


class TestDeterminism:
    def test_train_seg_checkpoints_byte_identical(self, dataset, fast_profile_path, tmp_path):
        args = ["train-seg", "--data", str(dataset / "manifest.json"),
                "--profile", fast_profile_path, "--seed", "11"]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a" / "seg_model.fpkt").read_bytes()
        b = (tmp_path / "b" / "seg_model.fpkt").read_bytes()
        assert a == b

    def test_segment_sidecars_byte_identical(self, dataset, fast_profile_path, tmp_path):
        seg_dir = tmp_path / "seg"
        main(["train-seg", "--data", str(dataset / "manifest.json"),
              "--profile", fast_profile_path, "--seed", "11", "--out", str(seg_dir)])
        image = dataset / "images" / "face_0001.png"
        for name in ("p1", "p2"):
            assert main(["segment", "--model", str(seg_dir / "seg_model.fpkt"),
                         "--image", str(image), "--profile", fast_profile_path,
                         "--out", str(tmp_path / name)]) == 0
        assert (tmp_path / "p1" / "pms.fppm").read_bytes() == \
               (tmp_path / "p2" / "pms.fppm").read_bytes()
        assert (tmp_path / "p1" / "pm_skin.png").read_bytes() == \
               (tmp_path / "p2" / "pm_skin.png").read_bytes()

    def test_run_records_written(self, dataset):
        record = json.loads((dataset / "run_record.json").read_text())
        assert record["command"] == "synth"
        assert record["arguments"]["seed"] == 3
