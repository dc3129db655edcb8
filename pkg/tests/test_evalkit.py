"""Evaluation harness tests: metrics, fold hygiene, small k-fold runs."""

import json

import numpy as np
import pytest

from facekit.errors import ShapeError
from facekit.evalkit import (
    chance_band,
    emit_report,
    permute_labels,
    run_kfold,
    seg_metrics,
)
from facekit.importance import ForestConfig, importance_report, train_forest
from facekit.profiles import load_profile
from facekit.rng import Stream
from facekit.synth import default_config, generate_synthetic

from oracles import confusion_reference


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    """One tiny but complete 2-fold run shared by several tests."""
    root = tmp_path_factory.mktemp("small")
    manifest = generate_synthetic(default_config(size=32, seed=70), 12, root)
    profile = load_profile("toy")
    result = run_kfold(manifest, profile, k=2, seed=31)
    return manifest, profile, result


class TestSegMetrics:
    def test_perfect_prediction(self):
        stream = Stream(3)
        truth = (stream.u64_block(64) % 7).astype(np.uint8).reshape(8, 8)
        metrics = seg_metrics(truth, truth)
        assert metrics.accuracy == 1.0
        for cls, stats in enumerate(metrics.per_class):
            if (truth == cls).any():
                assert stats["f1"] == 1.0 and stats["iou"] == 1.0

    def test_constant_prediction_half_right(self):
        truth = np.zeros((4, 4), dtype=np.uint8)
        truth[2:] = 1
        pred = np.zeros((4, 4), dtype=np.uint8)
        metrics = seg_metrics(pred, truth)
        assert metrics.accuracy == 0.5

    def test_absent_class_undefined_not_zero(self):
        truth = np.zeros((3, 3), dtype=np.uint8)
        pred = np.zeros((3, 3), dtype=np.uint8)
        metrics = seg_metrics(pred, truth)
        assert metrics.per_class[5]["precision"] is None
        assert metrics.per_class[5]["recall"] is None
        assert metrics.per_class[5]["iou"] is None

    def test_confusion_matches_brute_force(self):
        stream = Stream(8)
        truth = (stream.u64_block(48) % 7).astype(np.uint8).reshape(6, 8)
        pred = (stream.u64_block(48) % 7).astype(np.uint8).reshape(6, 8)
        metrics = seg_metrics(pred, truth)
        np.testing.assert_array_equal(metrics.confusion, confusion_reference(pred, truth, 7))
        assert metrics.confusion.sum(axis=1).tolist() == [
            int((truth == c).sum()) for c in range(7)
        ]

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            seg_metrics(np.zeros((2, 2), dtype=np.uint8), np.zeros((3, 3), dtype=np.uint8))


class TestRunKfold:
    def test_two_folds_partition(self, small_run):
        _, _, result = small_run
        assert result.fold_plan.k == 2
        ids = sorted(result.folds[0].test_ids + result.folds[1].test_ids)
        assert len(ids) == 12 and len(set(ids)) == 12

    def test_hygiene(self, small_run):
        _, _, result = small_run
        assert result.hygiene_ok()
        for fold in result.folds:
            assert not set(fold.test_ids) & set(fold.train_ids)

    def test_metrics_populated(self, small_run):
        _, _, result = small_run
        assert 0.0 <= result.cls.mean_accuracy <= 1.0
        assert result.seg_mean_accuracy is not None
        assert len(result.cls.fold_accuracies) == 2
        assert result.cls.confusion.sum() == 12

    def test_deterministic(self, small_run, tmp_path):
        manifest, profile, result = small_run
        again = run_kfold(manifest, profile, k=2, seed=31)
        assert again.cls.fold_accuracies == result.cls.fold_accuracies
        assert np.array_equal(again.cls.confusion, result.cls.confusion)
        assert [f.seg_accuracy for f in again.folds] == [
            f.seg_accuracy for f in result.folds
        ]

    def test_shared_seg_model_flag(self, small_run):
        manifest, profile, _ = small_run
        result = run_kfold(manifest, profile, k=2, seed=31, shared_seg_model=True)
        assert result.shared_seg_model
        assert not result.hygiene_ok()  # leaky protocol by construction

    def test_k2_on_4_items(self, tmp_path):
        # smallest viable run: 4 entries sharing one label still completes
        from dataclasses import replace
        from facekit.dataio import DatasetManifest

        manifest = generate_synthetic(default_config(size=32, seed=71), 4, tmp_path)
        entries = [replace(e, label="familya") for e in manifest.entries]
        manifest = DatasetManifest(
            root=manifest.root, entries=entries, scheme=manifest.scheme
        )
        profile = load_profile("toy")
        result = run_kfold(manifest, profile, k=2, seed=5)
        assert sorted(len(f.test_ids) for f in result.folds) == [2, 2]


class TestPermutationControl:
    def test_labels_permuted_not_lost(self, small_run):
        manifest, _, _ = small_run
        control = permute_labels(manifest, seed=9)
        assert sorted(e.label for e in control.entries) == sorted(
            e.label for e in manifest.entries
        )
        assert any(
            a.label != b.label
            for a, b in zip(
                sorted(manifest.entries, key=lambda e: e.id),
                sorted(control.entries, key=lambda e: e.id),
            )
        )

    def test_chance_band(self):
        lo, hi = chance_band(2, 100)
        assert lo == pytest.approx(0.35)
        assert hi == pytest.approx(0.65)


class TestEmitReport:
    def test_files_and_determinism(self, small_run, tmp_path):
        manifest, _, result = small_run
        stream = Stream(1)
        x = stream.uniform(40 * 21).reshape(40, 21)
        y = np.where(x[:, 3] > 0.5, "a", "b")
        report = importance_report(train_forest((x, y), ForestConfig(n_trees=10, seed=2)))

        first = emit_report(result, report, tmp_path / "r1")
        second = emit_report(result, report, tmp_path / "r2")
        names = sorted(p.name for p in first)
        assert names == ["confusion.png", "importance.png", "metrics.json"]
        for a, b in zip(sorted(first), sorted(second)):
            assert a.read_bytes() == b.read_bytes()

    def test_empty_importance_omits_chart(self, small_run, tmp_path):
        _, _, result = small_run
        files = emit_report(result, None, tmp_path / "r")
        names = sorted(p.name for p in files)
        assert names == ["confusion.png", "metrics.json"]
        doc = json.loads((tmp_path / "r" / "metrics.json").read_text())
        assert doc["importance"] is None

    def test_metrics_json_shape(self, small_run, tmp_path):
        _, _, result = small_run
        emit_report(result, None, tmp_path / "r")
        doc = json.loads((tmp_path / "r" / "metrics.json").read_text())
        assert doc["k"] == 2
        assert len(doc["folds"]) == 2
        assert doc["classification"]["labels"] == ["familya", "familyb"]
