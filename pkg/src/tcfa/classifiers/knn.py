"""K-nearest-neighbour scoring with Euclidean distance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from ._common import as_xy

K_GRID = (1, 3, 5, 7, 9)
WEIGHTINGS = ("uniform", "distance")


@dataclass
class KnnModel:
    X: np.ndarray
    y: np.ndarray
    k: int = 5
    weights: str = "uniform"

    def __post_init__(self):
        if self.weights not in WEIGHTINGS:
            raise ValueError(f"weights must be one of {WEIGHTINGS}, got {self.weights!r}")
        if self.k < 1 or self.k % 2 == 0:
            raise ValueError(f"K must be a positive odd number, got {self.k}")
        if len(self.y) and self.k > len(self.y):
            raise ValueError(f"K={self.k} exceeds the {len(self.y)} stored training rows")


def knn_fit(train, k: int = 5, weights: str = "uniform", labels=None) -> KnnModel:
    X, y = as_xy(train, labels)
    return KnnModel(X.copy(), y.copy(), k, weights)


def euclidean(p, q) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    return float(np.sqrt(np.sum((p - q) ** 2)))


def knn_predict_proba(model: KnnModel, x, chunk: int = 512) -> np.ndarray:
    if len(model.y) == 0:
        raise ValueError("KNN model holds no training rows")
    X, _ = as_xy(x)
    if X.shape[1] != model.X.shape[1]:
        raise ValueError(f"model expects {model.X.shape[1]} features, got {X.shape[1]}")
    k = model.k
    out = np.empty(X.shape[0])
    for start in range(0, X.shape[0], chunk):
        d = cdist(X[start : start + chunk], model.X)
        # stable sort: ties at the K-th distance go to the lower training row
        nn = np.argsort(d, axis=1, kind="stable")[:, :k]
        dk = np.take_along_axis(d, nn, axis=1)
        lab = model.y[nn].astype(np.float64)
        if model.weights == "uniform":
            out[start : start + chunk] = lab.mean(axis=1)
            continue
        for i in range(len(nn)):
            zero = dk[i] == 0.0
            if zero.any():
                out[start + i] = lab[i, zero].mean()
            else:
                w = 1.0 / dk[i]
                out[start + i] = np.dot(w, lab[i]) / w.sum()
    return out
