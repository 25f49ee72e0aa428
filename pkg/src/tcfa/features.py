"""Pixel-range ratio features and min-max normalization."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .imaging import PLAQUE_BANDS, GreyImage, Region, RoiMask

N_BINS = 26
N_FEATURES = 1 + N_BINS * len(PLAQUE_BANDS)
FEATURE_NAMES = tuple(f"F{i}" for i in range(1, N_FEATURES + 1))

# [0,10], [11,20], ..., [241,250], [251,255]
BIN_OF_INTENSITY = np.maximum(0, (np.arange(256) - 1) // 10).astype(np.intp)
BIN_EDGES = tuple((0 if b == 0 else 10 * b + 1, min(10 * b + 10, 255)) for b in range(N_BINS))


def describe_feature(index: int) -> tuple[str, str]:
    """Return (pixel range, region) for a 1-based feature index."""
    if index == 1:
        return "-", "-"
    band, b = divmod(index - 2, N_BINS)
    lo, hi = BIN_EDGES[b]
    return f"{lo} - {hi}", PLAQUE_BANDS[band].name.capitalize()


def extract_features(image: GreyImage, roi: RoiMask) -> np.ndarray:
    """105-vector: plaque fraction, then 26 bin ratios for each of CAP, SUF1, SUF2, SUF3."""
    if image.pixels.shape != roi.regions.shape:
        raise ValueError(f"image {image.pixels.shape} and roi {roi.regions.shape} differ in size")
    regions = roi.regions.ravel()
    bins = BIN_OF_INTENSITY[image.pixels.ravel()]
    hist = np.bincount(regions * N_BINS + bins, minlength=len(Region) * N_BINS)
    hist = hist.reshape(len(Region), N_BINS).astype(np.float64)
    totals = hist.sum(axis=1)
    plaque = sum(totals[b] for b in PLAQUE_BANDS)
    lumen = totals[Region.LUMEN]
    if plaque + lumen == 0:
        raise ValueError("roi has neither plaque nor lumen pixels")
    out = np.zeros(N_FEATURES)
    out[0] = plaque / (plaque + lumen)
    for i, band in enumerate(PLAQUE_BANDS):
        if totals[band] > 0:
            out[1 + i * N_BINS : 1 + (i + 1) * N_BINS] = hist[band] / totals[band]
    return out


@dataclass
class FeatureMatrix:
    ids: list[str]
    labels: np.ndarray
    values: np.ndarray
    names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        self.ids = [str(i) for i in self.ids]
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("feature values must be 2-D")
        n, f = self.values.shape
        if len(self.ids) != n or self.labels.shape != (n,):
            raise ValueError("ids, labels and rows disagree in length")
        if len(self.names) != f:
            raise ValueError(f"{len(self.names)} names for {f} columns")
        if n and not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0 (normal) or 1 (TCFA)")
        self.names = tuple(self.names)

    def __len__(self):
        return len(self.ids)

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def subset(self, rows) -> "FeatureMatrix":
        rows = np.asarray(rows, dtype=np.intp)
        return FeatureMatrix([self.ids[i] for i in rows], self.labels[rows], self.values[rows], self.names)

    def columns(self, cols) -> "FeatureMatrix":
        cols = np.asarray(cols, dtype=np.intp)
        return FeatureMatrix(list(self.ids), self.labels.copy(), self.values[:, cols], tuple(self.names[c] for c in cols))

    def with_values(self, values) -> "FeatureMatrix":
        return FeatureMatrix(list(self.ids), self.labels.copy(), values, self.names)


def write_feature_csv(path, m: FeatureMatrix) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label", *m.names])
        for sid, lab, row in zip(m.ids, m.labels, m.values):
            w.writerow([sid, int(lab), *(format(v, ".17g") for v in row)])


def read_feature_csv(path) -> FeatureMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["id", "label"]:
        raise ValueError(f"{path}: header must start with id,label")
    names = tuple(rows[0][2:])
    body = rows[1:]
    ids = [r[0] for r in body]
    labels = [int(r[1]) for r in body]
    values = np.array([[float(v) for v in r[2:]] for r in body], dtype=np.float64).reshape(len(body), len(names))
    return FeatureMatrix(ids, labels, values, names)


# ----------------------------------------------------------------- normalization


@dataclass
class NormalizationParams:
    mins: np.ndarray
    maxs: np.ndarray
    names: tuple[str, ...] = field(default=FEATURE_NAMES)

    def __post_init__(self):
        self.mins = np.asarray(self.mins, dtype=np.float64)
        self.maxs = np.asarray(self.maxs, dtype=np.float64)
        if self.mins.shape != self.maxs.shape or (self.maxs < self.mins).any():
            raise ValueError("normalization params need max >= min per feature")
        self.names = tuple(self.names)


def fit_normalizer(train: FeatureMatrix) -> NormalizationParams:
    if len(train) == 0:
        raise ValueError("cannot fit a normalizer on an empty matrix")
    return NormalizationParams(train.values.min(axis=0), train.values.max(axis=0), train.names)


def apply_normalizer(params: NormalizationParams, m: FeatureMatrix) -> FeatureMatrix:
    if m.n_features != params.mins.shape[0]:
        raise ValueError(f"matrix has {m.n_features} columns, normalizer expects {params.mins.shape[0]}")
    span = params.maxs - params.mins
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, (m.values - params.mins) / safe, 0.0)
    return m.with_values(np.clip(out, 0.0, 1.0))


def write_normalizer_csv(path, params: NormalizationParams) -> None:
    """Two rows, no header: per-feature minima, then maxima."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([format(v, ".17g") for v in params.mins])
        w.writerow([format(v, ".17g") for v in params.maxs])


def read_normalizer_csv(path, names=None) -> NormalizationParams:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) != 2 or len(rows[0]) != len(rows[1]):
        raise ValueError(f"{path}: expected a min row and a max row of equal length")
    mins = [float(v) for v in rows[0]]
    names = tuple(names) if names is not None else FEATURE_NAMES[: len(mins)]
    return NormalizationParams(mins, [float(v) for v in rows[1]], names)
