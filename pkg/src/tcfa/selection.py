"""Chi-square feature scoring, ranking and top-N selection."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .features import FeatureMatrix


def chi2_scores(m: FeatureMatrix) -> np.ndarray:
    """Per-feature chi-square with column sums used as class frequencies.

    For each feature the observed value of class c is the sum of the feature
    over that class; the expected value is the column total times the class
    share. Terms with a zero expectation contribute nothing.
    """
    X = m.values
    y = m.labels
    if (X < 0).any():
        raise ValueError("chi-square scoring needs nonnegative features")
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("chi-square scoring needs both classes present")
    n = len(y)
    total = X.sum(axis=0)
    score = np.zeros(X.shape[1])
    for c in classes:
        in_c = y == c
        observed = X[in_c].sum(axis=0)
        expected = total * (in_c.sum() / n)
        nz = expected > 0
        score[nz] += (observed[nz] - expected[nz]) ** 2 / expected[nz]
    return score


@dataclass(frozen=True)
class FeatureRanking:
    order: np.ndarray  # 0-based column indices, best first
    scores: np.ndarray  # chi-square score of each ranked column
    shares: np.ndarray  # percent of the total score
    names: tuple[str, ...]
    degenerate: bool = False  # every score was zero

    def __len__(self):
        return len(self.order)

    def rows(self):
        for rank, (col, score, share) in enumerate(zip(self.order, self.scores, self.shares), start=1):
            yield rank, self.names[col], float(score), float(share)


def rank_features(m: FeatureMatrix) -> FeatureRanking:
    scores = chi2_scores(m)
    # descending score, ascending index on ties
    order = np.lexsort((np.arange(len(scores)), -scores))
    total = scores.sum()
    degenerate = not total > 0
    shares = np.zeros_like(scores) if degenerate else scores / total * 100.0
    return FeatureRanking(order, scores[order], shares[order], tuple(m.names), degenerate)


def select_top_n(r: FeatureRanking, m: FeatureMatrix, n: int) -> FeatureMatrix:
    if not 1 <= n <= len(r):
        raise ValueError(f"n must be within 1..{len(r)}, got {n}")
    if m.n_features != len(r):
        raise ValueError("ranking and matrix disagree on the number of features")
    return m.columns(r.order[:n])


def write_ranking_csv(path, r: FeatureRanking) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "feature", "score", "share_pct"])
        for rank, name, score, share in r.rows():
            w.writerow([rank, name, format(score, ".17g"), format(share, ".17g")])


def read_ranking_csv(path) -> FeatureRanking:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    names = tuple(row["feature"] for row in rows)
    # ranking files list names in rank order; reorder columns by feature number
    canonical = tuple(sorted(names, key=lambda s: int(s.lstrip("F"))))
    pos = {name: i for i, name in enumerate(canonical)}
    order = np.array([pos[n] for n in names], dtype=np.intp)
    scores = np.array([float(row["score"]) for row in rows])
    shares = np.array([float(row["share_pct"]) for row in rows])
    return FeatureRanking(order, scores, shares, canonical, degenerate=not scores.sum() > 0)
