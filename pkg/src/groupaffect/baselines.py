"""Non-neural baselines over the per-image mean of the face score vectors."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import ImageRecord
from .emotion import LABELS, baseline_categorize

log = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def mean_feature(record: ImageRecord) -> np.ndarray:
    if not record.faces:
        raise ValueError(f"record {record.id!r} has no faces")
    return np.mean([f.scores7 for f in record.faces], axis=0)


def averaging_predict(record: ImageRecord) -> str:
    return baseline_categorize(mean_feature(record))


def feature_matrix(records: Sequence[ImageRecord]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean features and labels of records with faces, plus the kept mask."""
    keep = np.array([bool(r.faces) for r in records], dtype=bool)
    x = np.array([mean_feature(r) for r in records if r.faces]).reshape(-1, 7)
    y = np.array([LABELS.index(r.label) for r in records if r.faces], dtype=np.int64)
    return x, y, keep


# -- CART -------------------------------------------------------------------

@dataclass(frozen=True)
class ForestSpec:
    n_trees: int = 15
    max_depth: int | None = None
    features_per_split: int | None = None  # None -> round(sqrt(n_features))
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")


@dataclass
class DecisionTree:
    """Array-encoded binary tree. Leaves have feature == -1.

    A sample goes left when ``x[feature] <= threshold``; thresholds are
    training values, so predictions depend only on feature order.
    """

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    counts: list[np.ndarray] = field(default_factory=list)

    def _add(self, counts: np.ndarray) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.counts.append(counts)
        return len(self.feature) - 1

    def leaf_counts(self, x: np.ndarray) -> np.ndarray:
        node = 0
        while self.feature[node] >= 0:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
        return self.counts[node]

    def predict_one(self, x: np.ndarray) -> int:
        return int(np.argmax(self.leaf_counts(x)))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.array([self.predict_one(row) for row in np.atleast_2d(x)], dtype=np.int64)

    @property
    def depth(self) -> int:
        def walk(node):
            if self.feature[node] < 0:
                return 0
            return 1 + max(walk(self.left[node]), walk(self.right[node]))

        return walk(0)


def _gini(counts: np.ndarray) -> np.ndarray:
    n = counts.sum(axis=-1, keepdims=True)
    p = counts / np.maximum(n, 1)
    return 1.0 - (p * p).sum(axis=-1)


def _best_split(x: np.ndarray, y_onehot: np.ndarray, feature: int):
    """Lowest weighted child Gini over all cut points of one feature."""
    order = np.argsort(x[:, feature], kind="stable")
    vals = x[order, feature]
    valid = vals[:-1] < vals[1:]
    if not valid.any():
        return None
    left = np.cumsum(y_onehot[order], axis=0)[:-1]
    total = left[-1] + y_onehot[order[-1]]
    right = total - left
    n_left = np.arange(1, len(vals))
    n = len(vals)
    score = (n_left * _gini(left) + (n - n_left) * _gini(right)) / n
    score = np.where(valid, score, np.inf)
    i = int(np.argmin(score))
    return float(score[i]), float(vals[i])


def grow_tree(
    x: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    rng: np.random.Generator,
    features_per_split: int,
    max_depth: int | None = None,
) -> DecisionTree:
    tree = DecisionTree()
    onehot = np.eye(n_classes, dtype=np.int64)[y]
    n_features = x.shape[1]

    def grow(idx: np.ndarray, depth: int) -> int:
        counts = onehot[idx].sum(axis=0)
        node = tree._add(counts)
        if np.count_nonzero(counts) <= 1 or (max_depth is not None and depth >= max_depth):
            return node
        order = rng.permutation(n_features)
        best = None
        # sampled features first; fall back to the rest only if none can split
        for group in (order[:features_per_split], order[features_per_split:]):
            for f in group:
                found = _best_split(x[idx], onehot[idx], int(f))
                if found is not None and (best is None or found[0] < best[0]):
                    best = (found[0], found[1], int(f))
            if best is not None:
                break
        if best is None:
            return node
        _, thr, f = best
        go_left = x[idx, f] <= thr
        tree.feature[node] = f
        tree.threshold[node] = thr
        tree.left[node] = grow(idx[go_left], depth + 1)
        tree.right[node] = grow(idx[~go_left], depth + 1)
        return node

    grow(np.arange(len(y)), 0)
    return tree


@dataclass
class Forest:
    trees: list[DecisionTree]
    n_classes: int

    def votes(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        v = np.zeros((len(x), self.n_classes), dtype=np.int64)
        for tree in self.trees:
            v[np.arange(len(x)), tree.predict(x)] += 1
        return v

    def predict(self, x: np.ndarray) -> np.ndarray:
        # argmax picks the lowest class index on tied votes
        return self.votes(x).argmax(axis=1)


def rf_train(features: np.ndarray, labels: np.ndarray, spec: ForestSpec = ForestSpec(), n_classes: int = len(LABELS)) -> Forest:
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or len(x) != len(y) or len(y) == 0:
        raise ValueError(f"features {x.shape} and labels {y.shape} disagree or are empty")
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    if len(np.unique(y)) < 2:
        log.warning("random forest trained on a single class (%d); it will always predict it", int(y[0]))
    k = spec.features_per_split or max(1, int(round(math.sqrt(x.shape[1]))))
    k = min(k, x.shape[1])
    trees = []
    state = spec.seed & _MASK64
    for _ in range(spec.n_trees):
        state, tree_seed = splitmix64(state)
        rng = np.random.default_rng(tree_seed)
        idx = rng.integers(0, len(y), size=len(y)) if spec.bootstrap else np.arange(len(y))
        trees.append(grow_tree(x[idx], y[idx], n_classes, rng, k, spec.max_depth))
    return Forest(trees, n_classes)


def rf_predict(forest: Forest, feature: np.ndarray) -> int:
    return int(forest.predict(np.asarray(feature, dtype=np.float64)[None, :])[0])
