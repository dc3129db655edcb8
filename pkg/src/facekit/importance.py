"""Random-forest feature importance over probability-map summaries.

Each image reduces to 21 scalars: per class, the plane mean, the plane
standard deviation, and the argmax area fraction. A bagged forest of
Gini-split decision trees is trained on those scalars, and the mean
decrease in impurity per scalar (normalized per tree, averaged, then
renormalized) is aggregated per face class to rank class contributions.
Permutation importance is available as a secondary score.

The forest is hand-built: splits use Gini impurity decrease over a
seed-derived random feature subset per node, ties resolve to the lowest
feature index and threshold, and each tree owns a stream derived from
(seed, tree index) so results are schedule-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from facekit.errors import DataError, DomainError
from facekit.faceseg import ProbabilityMaps, argmax_mask
from facekit.palette import CLASS_COUNT, CLASS_NAMES
from facekit.rng import Stream, derive

SUMMARY_STATS = ("mean", "std", "area")
SUMMARY_NAMES = tuple(
    f"{cls}_{stat}" for cls in CLASS_NAMES for stat in SUMMARY_STATS
)
SUMMARY_WIDTH = len(SUMMARY_NAMES)  # 21


def extract_summary(pms: ProbabilityMaps, label: str | None = None):
    """21 scalars for one image: per class mean, std, argmax area share."""
    planes = pms.planes
    n = planes.shape[1] * planes.shape[2]
    mask = argmax_mask(pms)
    areas = np.bincount(mask.ravel(), minlength=CLASS_COUNT) / n
    values = np.empty(SUMMARY_WIDTH, dtype=np.float64)
    for cls in range(CLASS_COUNT):
        plane = planes[cls]
        mean = plane.sum() / n
        std = math.sqrt(((plane - mean) ** 2).sum() / n)
        values[3 * cls : 3 * cls + 3] = (mean, std, areas[cls])
    if label is None:
        return values
    return values, label


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 50
    max_depth: int = 12
    min_samples_leaf: int = 1
    max_features: int | None = None  # None -> ceil(sqrt(d))
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise DomainError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth < 1:
            raise DomainError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_samples_leaf < 1:
            raise DomainError("min_samples_leaf must be >= 1")

    def features_per_split(self, d: int) -> int:
        if self.max_features is not None:
            return min(self.max_features, d)
        return min(d, math.ceil(math.sqrt(d)))


def _gini(counts: np.ndarray, total: int) -> float:
    if total == 0:
        return 0.0
    p = counts / total
    return 1.0 - float((p * p).sum())


@dataclass
class _Node:
    feature: int = -1            # -1 marks a leaf
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None
    prediction: int = 0
    counts: np.ndarray | None = None


class DecisionTree:
    """Gini-split classification tree over float features."""

    def __init__(self, config: ForestConfig, n_classes: int):
        self.config = config
        self.n_classes = n_classes
        self.root: _Node | None = None
        # accumulated weighted impurity decrease per feature
        self.impurity_decrease: np.ndarray | None = None

    def fit(self, x: np.ndarray, y: np.ndarray, stream: Stream) -> None:
        self.impurity_decrease = np.zeros(x.shape[1], dtype=np.float64)
        self._n_root = x.shape[0]
        self.root = self._grow(x, y, np.arange(x.shape[0]), depth=0, stream=stream)

    def _grow(self, x, y, idx, depth, stream) -> _Node:
        counts = np.bincount(y[idx], minlength=self.n_classes)
        node = _Node(prediction=int(counts.argmax()), counts=counts)
        n = idx.size
        impurity = _gini(counts, n)
        if (
            depth >= self.config.max_depth
            or impurity == 0.0
            or n < 2 * self.config.min_samples_leaf
        ):
            return node

        d = x.shape[1]
        k = self.config.features_per_split(d)
        candidates = sorted(stream.sample(range(d), k))
        best_gain = 0.0
        best_feature = -1
        best_threshold = 0.0
        for feat in candidates:
            order = np.argsort(x[idx, feat], kind="stable")
            xs = x[idx[order], feat]
            ys = y[idx[order]]
            left_counts = np.zeros(self.n_classes, dtype=np.int64)
            right_counts = counts.copy()
            for pos in range(n - 1):
                cls = ys[pos]
                left_counts[cls] += 1
                right_counts[cls] -= 1
                if xs[pos + 1] <= xs[pos]:
                    continue  # no threshold separates equal values
                nl = pos + 1
                nr = n - nl
                if nl < self.config.min_samples_leaf or nr < self.config.min_samples_leaf:
                    continue
                gain = impurity - (
                    nl * _gini(left_counts, nl) + nr * _gini(right_counts, nr)
                ) / n
                if gain > best_gain + 1e-15:
                    best_gain = gain
                    best_feature = feat
                    best_threshold = (xs[pos] + xs[pos + 1]) / 2.0
        if best_feature < 0:
            return node

        node.feature = best_feature
        node.threshold = best_threshold
        self.impurity_decrease[best_feature] += best_gain * n / self._n_root
        mask = x[idx, best_feature] <= best_threshold
        node.left = self._grow(x, y, idx[mask], depth + 1, stream)
        node.right = self._grow(x, y, idx[~mask], depth + 1, stream)
        return node

    def predict_one(self, row: np.ndarray) -> int:
        node = self.root
        while node.feature >= 0:
            node = node.left if row[node.feature] <= node.threshold else node.right
        return node.prediction

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.array([self.predict_one(r) for r in x], dtype=np.int64)

    @property
    def is_leaf_only(self) -> bool:
        return self.root is not None and self.root.feature < 0


class RandomForest:
    """Bagged Gini trees, deterministic per seed."""

    def __init__(self, config: ForestConfig):
        self.config = config
        self.trees: list[DecisionTree] = []
        self.classes_: np.ndarray | None = None
        self.n_features_: int = 0
        self.oob_accuracy_: float | None = None

    def fit(self, x: np.ndarray, y_labels) -> "RandomForest":
        x = np.asarray(x, dtype=np.float64)
        classes, y = np.unique(np.asarray(y_labels), return_inverse=True)
        if classes.size < 2:
            # degenerate but valid: single-label forests are leaf-only
            pass
        self.classes_ = classes
        self.n_features_ = x.shape[1]
        n = x.shape[0]
        k = max(classes.size, 1)

        votes = np.zeros((n, k), dtype=np.int64)
        covered = np.zeros(n, dtype=bool)
        self.trees = []
        for t in range(self.config.n_trees):
            stream = Stream(derive(self.config.seed, "tree", t))
            if self.config.bootstrap:
                picks = np.array([stream.randbelow(n) for _ in range(n)])
            else:
                picks = np.arange(n)
            tree = DecisionTree(self.config, n_classes=k)
            tree.fit(x[picks], y[picks], stream)
            self.trees.append(tree)
            if self.config.bootstrap:
                oob = np.setdiff1d(np.arange(n), picks, assume_unique=False)
                if oob.size:
                    preds = tree.predict(x[oob])
                    votes[oob, preds] += 1
                    covered[oob] = True
        if self.config.bootstrap and covered.any():
            oob_pred = votes[covered].argmax(axis=1)
            self.oob_accuracy_ = float((oob_pred == y[covered]).mean())
        return self

    def predict(self, x: np.ndarray):
        x = np.asarray(x, dtype=np.float64)
        k = self.classes_.size
        votes = np.zeros((x.shape[0], k), dtype=np.int64)
        for tree in self.trees:
            preds = tree.predict(x)
            votes[np.arange(x.shape[0]), preds] += 1
        return self.classes_[votes.argmax(axis=1)]

    def accuracy(self, x: np.ndarray, y_labels) -> float:
        return float((self.predict(x) == np.asarray(y_labels)).mean())


def train_forest(dataset, config: ForestConfig) -> RandomForest:
    """Fit a forest on (summary vector, label) pairs or an (X, y) tuple."""
    if isinstance(dataset, tuple) and len(dataset) == 2:
        x, y = dataset
    else:
        x = np.stack([row for row, _ in dataset])
        y = [label for _, label in dataset]
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DomainError(f"summary matrix must be 2-d, got shape {x.shape}")
    return RandomForest(config).fit(x, y)


# ---------------------------------------------------------------------------
# reports


@dataclass
class ImportanceReport:
    """Normalized mean-decrease-in-impurity scores.

    per_feature: one score per summary scalar (sums to 1, or all zero).
    per_class:   sum over each face class's 3 scalars.
    ranking:     face class indices, most important first.
    uninformative: True when no tree ever split (all scores zero).
    """

    per_feature: np.ndarray
    per_class: np.ndarray
    ranking: list[int]
    uninformative: bool
    feature_names: tuple[str, ...] = SUMMARY_NAMES

    def to_dict(self) -> dict:
        return {
            "per_feature": {
                name: float(v) for name, v in zip(self.feature_names, self.per_feature)
            },
            "per_class": {
                CLASS_NAMES[i]: float(v) for i, v in enumerate(self.per_class)
            },
            "ranking": [CLASS_NAMES[i] for i in self.ranking],
            "uninformative": self.uninformative,
        }


def importance_report(forest: RandomForest) -> ImportanceReport:
    """Aggregate per-tree normalized impurity decreases into class scores."""
    if not forest.trees:
        raise DataError("forest has no trees; train it first")
    d = forest.n_features_
    total = np.zeros(d, dtype=np.float64)
    informative_trees = 0
    for tree in forest.trees:
        dec = tree.impurity_decrease
        s = dec.sum()
        if s > 0:
            total += dec / s
            informative_trees += 1
    if informative_trees == 0:
        per_feature = np.zeros(d)
        per_class = np.zeros(CLASS_COUNT)
        ranking = list(range(CLASS_COUNT))
        return ImportanceReport(per_feature, per_class, ranking, uninformative=True)
    per_feature = total / informative_trees
    per_feature = per_feature / per_feature.sum()
    if d == SUMMARY_WIDTH:
        per_class = per_feature.reshape(CLASS_COUNT, len(SUMMARY_STATS)).sum(axis=1)
    else:
        per_class = np.zeros(CLASS_COUNT)
    order = sorted(range(CLASS_COUNT), key=lambda c: (-per_class[c], c))
    return ImportanceReport(per_feature, per_class, order, uninformative=False)


def permutation_importance(
    forest: RandomForest, x: np.ndarray, y_labels, seed: int, repeats: int = 5
) -> np.ndarray:
    """Secondary score: mean accuracy drop when one feature is shuffled."""
    x = np.asarray(x, dtype=np.float64)
    base = forest.accuracy(x, y_labels)
    drops = np.zeros(x.shape[1], dtype=np.float64)
    for feat in range(x.shape[1]):
        for rep in range(repeats):
            stream = Stream(derive(seed, "perm", feat, rep))
            shuffled = x.copy()
            shuffled[:, feat] = shuffled[stream.permutation(x.shape[0]), feat]
            drops[feat] += base - forest.accuracy(shuffled, y_labels)
    return drops / repeats
