"""Metrics and the k-fold experiment runner.

Per fold, the runner trains a segmentation model on the train split,
generates probability maps for every entry with that model, builds the
5-plane feature stack, trains the attribute model on the train split,
and evaluates on the held-out fold. Held-out entries never influence any
training stage of their own fold (fold hygiene); `shared_seg_model=True`
reproduces the looser protocol that trains one segmentation model on all
labeled images and reuses it across folds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from facekit.attrclass import (
    AttributeScheme,
    build_feature_vector,
    classify_batch,
    train_attribute_model,
)
from facekit.dataio import (
    DatasetManifest,
    FoldPlan,
    load_image,
    load_mask,
    make_folds,
    normalize_illumination,
)
from facekit.errors import DataError, ShapeError
from facekit.faceseg import argmax_mask, sample_training_patches, segment
from facekit.network import Network, init_parameters
from facekit.palette import CLASS_COUNT
from facekit.profiles import Profile
from facekit.rng import Stream, derive
from facekit.train import TrainConfig, train


# ---------------------------------------------------------------------------
# segmentation metrics


@dataclass
class SegMetrics:
    """Pixel accuracy, per-class PRF/IoU, and a truth-by-prediction
    confusion matrix. Classes absent from both truth and prediction carry
    None (undefined), never a fake zero."""

    accuracy: float
    confusion: np.ndarray  # [7,7] int64, rows = truth
    per_class: list[dict]

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "confusion": self.confusion.tolist(),
            "per_class": self.per_class,
        }


def seg_metrics(predicted: np.ndarray, truth: np.ndarray) -> SegMetrics:
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ShapeError(
            f"predicted mask {predicted.shape} does not match truth {truth.shape}"
        )
    k = CLASS_COUNT
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (truth.ravel().astype(np.int64), predicted.ravel().astype(np.int64)), 1)
    total = int(confusion.sum())
    accuracy = float(np.trace(confusion) / total)
    per_class = []
    for c in range(k):
        tp = int(confusion[c, c])
        truth_n = int(confusion[c].sum())
        pred_n = int(confusion[:, c].sum())
        union = truth_n + pred_n - tp
        precision = tp / pred_n if pred_n else None
        recall = tp / truth_n if truth_n else None
        if precision is not None and recall is not None and (precision + recall) > 0:
            f1 = 2 * precision * recall / (precision + recall)
        elif precision is None or recall is None:
            f1 = None
        else:
            f1 = 0.0
        iou = tp / union if union else None
        per_class.append({"precision": precision, "recall": recall, "f1": f1, "iou": iou})
    return SegMetrics(accuracy=accuracy, confusion=confusion, per_class=per_class)


# ---------------------------------------------------------------------------
# classification metrics


@dataclass
class ClsMetrics:
    labels: tuple[str, ...]
    accuracy: float
    confusion: np.ndarray  # [k,k] int64, rows = truth
    per_label: list[dict]
    fold_accuracies: list[float]
    mean_accuracy: float
    std_accuracy: float

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "accuracy": self.accuracy,
            "confusion": self.confusion.tolist(),
            "per_label": self.per_label,
            "fold_accuracies": self.fold_accuracies,
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
        }


def _cls_metrics(labels, truth: list[str], predicted: list[str], fold_accs: list[float]) -> ClsMetrics:
    k = len(labels)
    index = {l: i for i, l in enumerate(labels)}
    confusion = np.zeros((k, k), dtype=np.int64)
    for t, p in zip(truth, predicted):
        confusion[index[t], index[p]] += 1
    total = confusion.sum()
    accuracy = float(np.trace(confusion) / total) if total else 0.0
    per_label = []
    for i in range(k):
        tp = int(confusion[i, i])
        truth_n = int(confusion[i].sum())
        pred_n = int(confusion[:, i].sum())
        per_label.append(
            {
                "label": labels[i],
                "precision": tp / pred_n if pred_n else None,
                "recall": tp / truth_n if truth_n else None,
            }
        )
    mean = float(np.mean(fold_accs)) if fold_accs else 0.0
    std = float(np.std(fold_accs)) if fold_accs else 0.0
    return ClsMetrics(
        labels=tuple(labels),
        accuracy=accuracy,
        confusion=confusion,
        per_label=per_label,
        fold_accuracies=[float(a) for a in fold_accs],
        mean_accuracy=mean,
        std_accuracy=std,
    )


# ---------------------------------------------------------------------------
# the k-fold runner


@dataclass
class FoldArtifacts:
    fold: int
    train_ids: list[str]
    test_ids: list[str]
    cls_accuracy: float
    seg_accuracy: float | None
    truth_labels: list[str]
    predicted_labels: list[str]
    seg_history: list = field(default_factory=list)
    attr_history: list = field(default_factory=list)


@dataclass
class KFoldResult:
    cls: ClsMetrics
    seg_mean_accuracy: float | None
    seg_std_accuracy: float | None
    folds: list[FoldArtifacts]
    fold_plan: FoldPlan
    seed: int
    shared_seg_model: bool

    def hygiene_ok(self) -> bool:
        """No held-out id may appear in its own fold's training inputs."""
        if self.shared_seg_model:
            return False
        return all(
            not (set(f.test_ids) & set(f.train_ids)) for f in self.folds
        )

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "k": self.fold_plan.k,
            "shared_seg_model": self.shared_seg_model,
            "stratified": self.fold_plan.stratified,
            "classification": self.cls.to_dict(),
            "segmentation": {
                "mean_accuracy": self.seg_mean_accuracy,
                "std_accuracy": self.seg_std_accuracy,
                "fold_accuracies": [f.seg_accuracy for f in self.folds],
            },
            "folds": [
                {
                    "fold": f.fold,
                    "train_ids": f.train_ids,
                    "test_ids": f.test_ids,
                    "cls_accuracy": f.cls_accuracy,
                    "seg_accuracy": f.seg_accuracy,
                }
                for f in self.folds
            ],
        }


def _load_entry(manifest: DatasetManifest, entry, normalize: bool):
    image = load_image(manifest.image_path(entry))
    if normalize:
        image = normalize_illumination(image)
    mask = None
    mask_path = manifest.mask_path(entry)
    if mask_path is not None:
        mask = load_mask(mask_path, expect_size=image.shape[1:])
    return image, mask


def _train_seg_model(profile: Profile, images, masks, ids, seed: int) -> Network:
    spec = profile.resolved_seg_network()
    patches = []
    for eid in ids:
        sampled, _ = sample_training_patches(
            images[eid], masks[eid], profile.patch,
            seed=derive(seed, "sample", eid), per_class_quota=profile.patch_quota,
        )
        patches.extend(sampled)
    if not patches:
        raise DataError("no training patches: no masked entries in the train split")
    config = TrainConfig(
        epochs=profile.seg_train.epochs,
        learning_rate=profile.seg_train.learning_rate,
        momentum=profile.seg_train.momentum,
        batch_size=profile.seg_train.batch_size,
        seed=derive(seed, "seg-train"),
    )
    params = init_parameters(spec, derive(seed, "seg-init"))
    trained, history = train(spec, params, patches, config)
    net = Network(spec, trained)
    net.history = history
    return net


def run_kfold(
    manifest: DatasetManifest,
    profile: Profile,
    k: int,
    seed: int,
    shared_seg_model: bool = False,
    progress=None,
) -> KFoldResult:
    """Full two-stage pipeline under a k-fold protocol.

    Requires masks and labels on every entry. Returns aggregate metrics
    plus per-fold artifacts; deterministic per (manifest, profile, k, seed).
    """
    if manifest.scheme is None:
        raise DataError("manifest has no attribute scheme; k-fold needs labels")
    scheme = AttributeScheme.from_dict(manifest.scheme)
    missing = [e.id for e in manifest.entries if e.mask is None or e.label is None]
    if missing:
        raise DataError(
            f"k-fold needs a mask and label on every entry; missing on {missing[:5]}"
        )

    plan = make_folds(manifest, k, seed)
    normalize = profile.normalize_illumination
    images = {}
    masks = {}
    for entry in manifest.entries:
        image, mask = _load_entry(manifest, entry, normalize)
        images[entry.id] = image
        masks[entry.id] = mask
    labels = {e.id: e.label for e in manifest.entries}

    shared_net = None
    if shared_seg_model:
        all_ids = sorted(images)
        shared_net = _train_seg_model(
            profile, images, masks, all_ids, derive(seed, "seg-shared")
        )

    folds: list[FoldArtifacts] = []
    all_truth: list[str] = []
    all_pred: list[str] = []
    for fold in range(k):
        fold_seed = derive(seed, "fold", fold)
        train_ids = plan.train_ids(fold)
        test_ids = plan.fold_ids(fold)
        if progress:
            progress(f"fold {fold}: train {len(train_ids)}, test {len(test_ids)}")

        seg_net = shared_net or _train_seg_model(
            profile, images, masks, train_ids, fold_seed
        )

        features = {}
        seg_accs = []
        for eid in train_ids + test_ids:
            pms = segment(seg_net, images[eid], profile.patch, image_id=eid)
            features[eid] = build_feature_vector(pms, profile.feature_size)
            if eid in test_ids:
                seg_accs.append(seg_metrics(argmax_mask(pms), masks[eid]).accuracy)

        attr_spec = profile.attribute_network(scheme.class_count)
        attr_config = TrainConfig(
            epochs=profile.attr_train.epochs,
            learning_rate=profile.attr_train.learning_rate,
            momentum=profile.attr_train.momentum,
            batch_size=profile.attr_train.batch_size,
            seed=derive(fold_seed, "attr-train"),
        )
        model, attr_history = train_attribute_model(
            [(features[eid], labels[eid]) for eid in train_ids],
            attr_spec,
            scheme,
            attr_config,
        )

        predictions = classify_batch(model, [features[eid] for eid in test_ids])
        predicted = [p[0] for p in predictions]
        truth = [labels[eid] for eid in test_ids]
        hits = sum(1 for t, p in zip(truth, predicted) if t == p)
        fold_acc = hits / len(test_ids)

        all_truth.extend(truth)
        all_pred.extend(predicted)
        folds.append(
            FoldArtifacts(
                fold=fold,
                train_ids=train_ids,
                test_ids=test_ids,
                cls_accuracy=fold_acc,
                seg_accuracy=float(np.mean(seg_accs)) if seg_accs else None,
                truth_labels=truth,
                predicted_labels=predicted,
                seg_history=getattr(seg_net, "history", []),
                attr_history=attr_history,
            )
        )

    cls = _cls_metrics(
        scheme.labels, all_truth, all_pred, [f.cls_accuracy for f in folds]
    )
    seg_fold_accs = [f.seg_accuracy for f in folds if f.seg_accuracy is not None]
    return KFoldResult(
        cls=cls,
        seg_mean_accuracy=float(np.mean(seg_fold_accs)) if seg_fold_accs else None,
        seg_std_accuracy=float(np.std(seg_fold_accs)) if seg_fold_accs else None,
        folds=folds,
        fold_plan=plan,
        seed=seed,
        shared_seg_model=shared_seg_model,
    )


def permute_labels(manifest: DatasetManifest, seed: int) -> DatasetManifest:
    """Control manifest with labels shuffled across entries (in memory)."""
    from dataclasses import replace as dc_replace

    entries = sorted(manifest.entries, key=lambda e: e.id)
    current = [e.label for e in entries]
    order = Stream(derive(seed, "label-permutation")).permutation(len(entries))
    permuted = [
        dc_replace(e, label=current[order[i]]) for i, e in enumerate(entries)
    ]
    return DatasetManifest(root=manifest.root, entries=permuted, scheme=manifest.scheme)


def chance_band(k_labels: int, n_test: int, sigmas: float = 3.0) -> tuple[float, float]:
    """Binomial 3-sigma band around chance accuracy for n_test items."""
    p = 1.0 / k_labels
    sigma = math.sqrt(p * (1 - p) / n_test)
    return p - sigmas * sigma, p + sigmas * sigma


# ---------------------------------------------------------------------------
# report emission


def emit_report(result: KFoldResult, importance_rep, out_dir) -> list:
    """Write metrics.json, a confusion-matrix image, and (when importance
    scores are present) the class-importance bar chart. Byte-stable for
    identical inputs."""
    from pathlib import Path

    from facekit.charts import bar_chart_png, confusion_chart_png
    from facekit.dataio import _write_atomic
    from facekit.netspec import canonical_json
    from facekit.palette import CLASS_COLORS, CLASS_NAMES

    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []

        doc = result.to_dict()
        if importance_rep is not None:
            doc["importance"] = importance_rep.to_dict()
        else:
            doc["importance"] = None
        metrics_path = out / "metrics.json"
        _write_atomic(metrics_path, canonical_json(doc).encode("utf-8"))
        written.append(metrics_path)

        confusion_path = out / "confusion.png"
        _write_atomic(
            confusion_path,
            confusion_chart_png(
                result.cls.confusion, result.cls.labels, title="attribute confusion"
            ),
        )
        written.append(confusion_path)

        if importance_rep is not None and not importance_rep.uninformative:
            chart_path = out / "importance.png"
            _write_atomic(
                chart_path,
                bar_chart_png(
                    importance_rep.per_class,
                    CLASS_NAMES,
                    colors=CLASS_COLORS,
                    title="per-class feature importance (mean decrease in impurity)",
                ),
            )
            written.append(chart_path)
        return written
    except OSError as exc:
        raise DataError(f"cannot write report under {out}: {exc}") from exc
