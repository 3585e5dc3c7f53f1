"""Binary CART trees with Gini splits, bagged forests and weighted majority votes.

Labels are always in {-1, +1}. Ties (leaf majorities, split scores, votes)
are broken deterministically so that a fixed seed reproduces a forest
bit for bit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .posterior import PosteriorWeights

# Weighted vote sums this close to zero are ties (float sums of +-1/m rarely hit 0 exactly).
TIE_TOL = 1e-12


class SplitFeatureMode(enum.Enum):
    ALL_FEATURES = "all"
    ONE_RANDOM_FEATURE = "one"


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: list[str] | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels).astype(np.int8)
        if X.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if y.shape != (X.shape[0],):
            raise ValueError("labels must have one entry per row")
        if not np.all((y == 1) | (y == -1)):
            raise ValueError("labels must be -1 or +1")
        if np.isnan(X).any():
            raise ValueError("features contain missing values")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    def subset(self, rows) -> "Dataset":
        return Dataset(self.features[rows], self.labels[rows], self.feature_names)


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int | None = None
    split_feature_mode: SplitFeatureMode = SplitFeatureMode.ALL_FEATURES

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1 or None, got {self.max_depth}")


@dataclass(frozen=True)
class TreeModel:
    """Array-encoded tree. ``feature[k] == -1`` marks node k as a leaf.

    Internal nodes send ``x[feature] <= threshold`` to ``left`` and the rest to ``right``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    label: np.ndarray

    @property
    def n_nodes(self):
        return len(self.feature)

    @property
    def depth(self):
        depths = np.zeros(self.n_nodes, dtype=int)
        for k in range(self.n_nodes):
            if self.feature[k] >= 0:
                depths[self.left[k]] = depths[k] + 1
                depths[self.right[k]] = depths[k] + 1
        return int(depths.max())

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            return self.predict(X[None, :])
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.feature[node] >= 0
        while active.any():
            idx = rows[active]
            cur = node[idx]
            go_left = X[idx, self.feature[cur]] <= self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return self.label[node].astype(np.int8)


def _majority(y) -> int:
    return 1 if 2 * int(np.sum(y == 1)) >= len(y) else -1


def _best_split(X, y, features):
    """Best Gini split over ``features``; returns (feature, threshold) or None.

    Maximising sum over children of (pos^2 + neg^2) / size is the same as
    minimising the size-weighted child Gini impurity. Ties go to the lowest
    feature index and then the lowest threshold.
    """
    n = len(y)
    Xf = X[:, features]
    order = np.argsort(Xf, axis=0, kind="stable")
    vals = np.take_along_axis(Xf, order, axis=0)
    pos = (y[order] == 1).astype(np.int64)
    cum_pos = np.cumsum(pos, axis=0)[:-1]
    n_left = np.arange(1, n, dtype=np.int64)[:, None]
    n_right = n - n_left
    pos_left = cum_pos
    pos_right = pos.sum(axis=0) - cum_pos
    neg_left = n_left - pos_left
    neg_right = n_right - pos_right
    score = (pos_left**2 + neg_left**2) / n_left + (pos_right**2 + neg_right**2) / n_right
    valid = vals[:-1] < vals[1:]
    if not valid.any():
        return None
    score = np.where(valid, score, -np.inf).T
    flat = int(np.argmax(score))
    j, k = divmod(flat, n - 1)
    threshold = 0.5 * (vals[k, j] + vals[k + 1, j])
    if threshold >= vals[k + 1, j]:
        threshold = vals[k, j]
    return int(features[j]), float(threshold)


def train_tree(data: Dataset, rows, cfg: TreeConfig, rng: np.random.Generator) -> TreeModel:
    """Grow a tree on ``data`` restricted to the multiset ``rows``.

    Nodes are split until they are pure, no feature varies inside them, or
    ``cfg.max_depth`` is reached.
    """
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("cannot train a tree on an empty row set")
    X = data.features[rows]
    y = data.labels[rows]
    all_features = np.arange(X.shape[1])

    feature, threshold, left, right, label = [], [], [], [], []

    def new_node(lab):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        label.append(lab)
        return len(feature) - 1

    root = new_node(_majority(y))
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        y_node = y[idx]
        if np.all(y_node == y_node[0]):
            continue
        if cfg.max_depth is not None and depth >= cfg.max_depth:
            continue
        X_node = X[idx]
        varying = all_features[X_node.min(axis=0) < X_node.max(axis=0)]
        if varying.size == 0:
            continue
        if cfg.split_feature_mode is SplitFeatureMode.ONE_RANDOM_FEATURE:
            candidates = varying[[int(rng.integers(varying.size))]]
        else:
            candidates = varying
        split = _best_split(X_node, y_node, candidates)
        if split is None:
            continue
        j, theta = split
        mask = X_node[:, j] <= theta
        li, ri = idx[mask], idx[~mask]
        feature[node] = j
        threshold[node] = theta
        left[node] = new_node(_majority(y[li]))
        right[node] = new_node(_majority(y[ri]))
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return TreeModel(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        label=np.asarray(label, dtype=np.int8),
    )


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    """Generator for one tree, derived from (seed, tree_index) only."""
    return np.random.default_rng([int(seed), int(tree_index)])


@dataclass
class Ensemble:
    trees: list[TreeModel]
    bootstrap_indices: np.ndarray
    weights: PosteriorWeights = field(default=None)
    n_train: int = 0

    def __post_init__(self):
        if self.weights is None:
            self.weights = PosteriorWeights.uniform(len(self.trees))
        if len(self.weights.weights) != len(self.trees):
            raise ValueError("one weight per tree is required")
        if not self.n_train:
            self.n_train = self.bootstrap_indices.shape[1]

    def __len__(self):
        return len(self.trees)

    @property
    def oob_mask(self) -> np.ndarray:
        """Boolean (m, n_train) matrix, True where a row is out of tree i's bootstrap."""
        m = len(self.trees)
        counts = np.zeros((m, self.n_train), dtype=np.int64)
        for i in range(m):
            counts[i] = np.bincount(self.bootstrap_indices[i], minlength=self.n_train)
        return counts == 0

    def predict_matrix(self, X) -> np.ndarray:
        """(m, n) matrix of per-tree predictions."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.vstack([t.predict(X) for t in self.trees]) if self.trees else np.empty((0, len(X)), np.int8)

    def with_weights(self, weights: PosteriorWeights) -> "Ensemble":
        return Ensemble(self.trees, self.bootstrap_indices, weights, self.n_train)


def train_forest(data: Dataset, m: int, cfg: TreeConfig, seed: int = 0) -> Ensemble:
    """Bag ``m`` trees; tree i uses its own generator seeded from (seed, i)."""
    if m < 1:
        raise ValueError(f"need at least one tree, got m={m}")
    n = len(data)
    trees, boots = [], np.empty((m, n), dtype=np.int64)
    for i in range(m):
        rng = tree_rng(seed, i)
        boots[i] = rng.integers(0, n, size=n)
        trees.append(train_tree(data, boots[i], cfg, rng))
    return Ensemble(trees, boots, PosteriorWeights.uniform(m), n)


def vote(predictions, weights) -> np.ndarray:
    """Sign of the weighted vote per column; a zero sum goes to +1."""
    s = np.asarray(weights, dtype=float) @ np.asarray(predictions, dtype=float)
    return np.where(s >= -TIE_TOL, 1, -1).astype(np.int8)


def mv_predict(ens: Ensemble, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    out = vote(ens.predict_matrix(np.atleast_2d(X)), ens.weights.weights)
    return out[0] if single else out


def margins(ens: Ensemble, data: Dataset) -> np.ndarray:
    """Y * sum_i rho_i h_i(X) per row."""
    return data.labels * (ens.weights.weights @ ens.predict_matrix(data.features))


def vote_loss(predictions, labels, weights) -> float:
    """Fraction of rows with margin <= 0, so exact ties count as mistakes.

    Weights may be signed.
    """
    s = np.asarray(weights, dtype=float) @ np.asarray(predictions, dtype=float)
    return float(np.mean(np.asarray(labels) * s <= TIE_TOL))


def mv_loss(ens: Ensemble, data: Dataset) -> float:
    return vote_loss(ens.predict_matrix(data.features), data.labels, ens.weights.weights)
