"""Random forest for quality regression and same/not-same classification.

Implemented from scratch so the split rule is pinned down exactly: thresholds
at midpoints of sorted unique feature values, impurity ties broken by lowest
feature index then lowest threshold, bit-determinism given the seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

REGRESSION = "regression"
CLASSIFICATION = "classification"


@dataclass(frozen=True)
class TrainConfig:
    n_trees: int = 100
    max_depth: int | None = None
    min_leaf: int = 1
    features_per_split: int | None = None  # default: ceil(sqrt(n_features))
    seed: int = 0
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be at least 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be at least 1")


@dataclass(eq=False)
class Tree:
    """Flattened binary tree; feature == -1 marks a leaf."""

    feature: np.ndarray    # (n_nodes,) int32
    threshold: np.ndarray  # (n_nodes,) float64
    left: np.ndarray       # (n_nodes,) int32
    right: np.ndarray      # (n_nodes,) int32
    value: np.ndarray      # (n_nodes,) or (n_nodes, n_classes) float64

    def apply(self, X: np.ndarray) -> np.ndarray:
        idx = np.zeros(X.shape[0], dtype=np.int32)
        while True:
            feat = self.feature[idx]
            active = feat >= 0
            if not active.any():
                return idx
            rows = np.nonzero(active)[0]
            node = idx[rows]
            go_left = X[rows, self.feature[node]] <= self.threshold[node]
            idx[rows] = np.where(go_left, self.left[node], self.right[node])


@dataclass(eq=False)
class Forest:
    trees: list[Tree]
    task: str
    config: TrainConfig
    n_features: int
    classes: np.ndarray | None = None  # classification only


class _TreeBuilder:
    def __init__(self, X, y, task, config, rng):
        self.X = X
        self.y = y
        self.task = task
        self.config = config
        self.rng = rng
        d = X.shape[1]
        k = config.features_per_split or math.ceil(math.sqrt(d))
        self.k = min(k, d)
        self.n_classes = 0 if task == REGRESSION else int(y.max()) + 1
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.values: list = []
        self._pending: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def build(self, sample_idx: np.ndarray) -> Tree:
        # Explicit preorder stack; recursion would overflow on deep trees.
        stack = [(sample_idx, 0, -1, "left")]
        while stack:
            idx, depth, parent, side = stack.pop()
            node = self._open_node(idx, depth)
            if parent >= 0:
                (self.left if side == "left" else self.right)[parent] = node
            if self.feature[node] >= 0:
                left_idx, right_idx = self._pending.pop(node)
                stack.append((right_idx, depth + 1, node, "right"))
                stack.append((left_idx, depth + 1, node, "left"))
        value = np.asarray(self.values, dtype=np.float64)
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=value,
        )

    def _leaf_value(self, idx):
        t = self.y[idx]
        if self.task == REGRESSION:
            return float(t.mean())
        counts = np.bincount(t, minlength=self.n_classes).astype(np.float64)
        return counts / counts.sum()

    def _emit_leaf(self, idx) -> int:
        node = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.values.append(self._leaf_value(idx))
        return node

    def _open_node(self, idx: np.ndarray, depth: int) -> int:
        cfg = self.config
        t = self.y[idx]
        pure = (t == t[0]).all()
        if (
            pure
            or len(idx) < 2 * cfg.min_leaf
            or (cfg.max_depth is not None and depth >= cfg.max_depth)
        ):
            return self._emit_leaf(idx)
        split = self._best_split(idx)
        if split is None:
            return self._emit_leaf(idx)
        feat, thr, left_idx, right_idx = split
        node = len(self.feature)
        self.feature.append(feat)
        self.threshold.append(thr)
        self.left.append(-1)
        self.right.append(-1)
        self.values.append(self._leaf_value(idx))  # placeholder, keeps arrays aligned
        self._pending[node] = (left_idx, right_idx)
        return node

    def _best_split(self, idx: np.ndarray):
        cfg = self.config
        n = len(idx)
        feats = self.rng.choice(self.X.shape[1], size=self.k, replace=False)
        feats.sort()
        t = self.y[idx]
        best = None  # (cost, feature, threshold, order, pos)
        for f in feats:
            vals = self.X[idx, f]
            order = np.argsort(vals, kind="stable")
            v = vals[order]
            cut = np.nonzero(v[:-1] < v[1:])[0]  # split after these positions
            cut = cut[(cut >= cfg.min_leaf - 1) & (cut < n - cfg.min_leaf)]
            if len(cut) == 0:
                continue
            ts = t[order]
            n_left = cut + 1
            n_right = n - n_left
            if self.task == REGRESSION:
                c1 = np.cumsum(ts)[cut]
                c2 = np.cumsum(ts * ts)[cut]
                s1 = ts.sum()
                s2 = (ts * ts).sum()
                cost = (c2 - c1 * c1 / n_left) + ((s2 - c2) - (s1 - c1) ** 2 / n_right)
            else:
                onehot = np.zeros((n, self.n_classes))
                onehot[np.arange(n), ts] = 1.0
                cl = np.cumsum(onehot, axis=0)[cut]
                cr = onehot.sum(axis=0)[None, :] - cl
                gini_l = n_left - (cl * cl).sum(axis=1) / n_left
                gini_r = n_right - (cr * cr).sum(axis=1) / n_right
                cost = gini_l + gini_r
            j = int(np.argmin(cost))  # first minimum: lowest threshold
            if best is None or cost[j] < best[0]:
                thr = 0.5 * (v[cut[j]] + v[cut[j] + 1])
                best = (float(cost[j]), int(f), thr, order, int(cut[j]))
        if best is None:
            return None
        _, feat, thr, order, pos = best
        left_idx = idx[order[: pos + 1]]
        right_idx = idx[order[pos + 1:]]
        return feat, thr, left_idx, right_idx


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be a 2D matrix of feature vectors")
    return X


def train(X, y, config: TrainConfig, task: str = REGRESSION) -> Forest:
    """Train a forest of CART trees on bootstrap samples with random feature subsets."""
    X = _as_matrix(X)
    y = np.asarray(y)
    if len(X) != len(y) or len(X) < 2:
        raise ValueError("need at least two consistent samples")
    if task == CLASSIFICATION:
        classes, encoded = np.unique(y, return_inverse=True)
        targets = encoded.astype(np.int64)
    elif task == REGRESSION:
        classes = None
        targets = y.astype(np.float64)
    else:
        raise ValueError(f"unknown task {task!r}")
    master = np.random.default_rng(config.seed)
    tree_seeds = master.integers(0, 2**63 - 1, size=config.n_trees)
    trees = []
    n = len(X)
    for seed in tree_seeds:
        rng = np.random.default_rng(int(seed))
        if config.bootstrap:
            sample = rng.integers(0, n, size=n)
        else:
            sample = np.arange(n)
        builder = _TreeBuilder(X, targets, task, config, rng)
        trees.append(builder.build(sample))
    return Forest(trees=trees, task=task, config=config, n_features=X.shape[1], classes=classes)


def _check_input(forest: Forest, x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != forest.n_features:
        raise ValueError(f"expected {forest.n_features} features, got shape {np.shape(x)}")
    return arr, single


def predict_regression(forest: Forest, x, clip: tuple[float, float] | None = (0.0, 1.0)):
    """Mean of per-tree leaf means; clipped to the quality range by default."""
    if forest.task != REGRESSION:
        raise ValueError("forest was not trained for regression")
    X, single = _check_input(forest, x)
    acc = np.zeros(X.shape[0])
    for tree in forest.trees:
        acc += tree.value[tree.apply(X)]
    out = acc / len(forest.trees)
    if clip is not None:
        out = np.clip(out, clip[0], clip[1])
    return float(out[0]) if single else out


def predict_proba(forest: Forest, x):
    """Mean of per-tree leaf class frequencies, aligned with forest.classes."""
    if forest.task != CLASSIFICATION:
        raise ValueError("forest was not trained for classification")
    X, single = _check_input(forest, x)
    acc = np.zeros((X.shape[0], len(forest.classes)))
    for tree in forest.trees:
        acc += tree.value[tree.apply(X)]
    out = acc / len(forest.trees)
    return out[0] if single else out
