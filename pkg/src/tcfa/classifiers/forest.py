"""Random forest of class-weighted Gini trees grown to purity on bootstrap resamples."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..kernels import best_split
from ._common import as_xy, check_binary

TREE_GRID = (10, 50, 100)


@dataclass
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # class-weighted TCFA probability at each node

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=np.int64)
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.feature[node] >= 0
        while active.any():
            r = rows[active]
            n = node[active]
            go_left = X[r, self.feature[n]] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return self.value[node]


@dataclass
class RfModel:
    trees: list[Tree]
    class_weights: tuple[float, float]
    n_features: int
    seed: int = 0


def class_weights(y: np.ndarray) -> tuple[float, float]:
    """Weights inversely proportional to class frequency, scaled like n / (2 * n_c)."""
    n = len(y)
    n1 = int(np.sum(y == 1))
    n0 = n - n1
    return n / (2.0 * n0), n / (2.0 * n1)


def _leaf_value(t0, t1, w0, w1) -> float:
    a, b = w0 * t0, w1 * t1
    return b / (a + b)


def grow_tree(X, y, counts, w, max_features, rng) -> Tree:
    """Grow one tree on rows with nonzero bootstrap ``counts`` until leaves are pure."""
    w0, w1 = w
    n_feat = X.shape[1]
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(samples):
        c = counts[samples]
        t1 = int(c[y[samples] == 1].sum())
        t0 = int(c.sum()) - t1
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(_leaf_value(t0, t1, w0, w1))
        return len(feature) - 1, t0, t1

    root_samples = np.flatnonzero(counts > 0).astype(np.int64)
    root, t0, t1 = new_node(root_samples)
    stack = [(root, root_samples, t0, t1)]
    while stack:
        node, samples, t0, t1 = stack.pop()
        if t0 == 0 or t1 == 0:
            continue
        order = rng.permutation(n_feat).astype(np.int64)
        f, thr, _ = best_split(X, samples, counts[samples], y[samples], w0, w1, order, max_features)
        if f < 0:
            continue
        goes_left = X[samples, f] <= thr
        ls, rs = samples[goes_left], samples[~goes_left]
        li, l0, l1 = new_node(ls)
        ri, r0, r1 = new_node(rs)
        feature[node], threshold[node], left[node], right[node] = f, thr, li, ri
        # right pushed first so the left subtree is numbered first
        stack.append((ri, rs, r0, r1))
        stack.append((li, ls, l0, l1))
    return Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=np.float64),
    )


def _fit_one(X, y, w, max_features, seed_seq) -> Tree:
    rng = np.random.default_rng(seed_seq)
    n = X.shape[0]
    counts = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.int64)
    return grow_tree(X, y, counts, w, max_features, rng)


def rf_train(train, trees: int = 100, seed: int = 0, labels=None, max_features=None, threads: int = 1) -> RfModel:
    X, y = as_xy(train, labels)
    if X.shape[0] < 2:
        raise ValueError("random forest needs at least two samples")
    check_binary(y)
    if trees < 1:
        raise ValueError("need at least one tree")
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    w = class_weights(y)
    if max_features is None:
        max_features = math.ceil(math.sqrt(X.shape[1]))
    streams = np.random.SeedSequence(seed).spawn(trees)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            fitted = list(pool.map(lambda s: _fit_one(X, y, w, max_features, s), streams))
    else:
        fitted = [_fit_one(X, y, w, max_features, s) for s in streams]
    return RfModel(fitted, w, X.shape[1], seed)


def rf_predict_proba(model: RfModel, x) -> np.ndarray:
    X, _ = as_xy(x)
    if X.shape[1] != model.n_features:
        raise ValueError(f"model expects {model.n_features} features, got {X.shape[1]}")
    return np.mean([t.predict(X) for t in model.trees], axis=0)
