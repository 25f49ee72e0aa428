"""Stratified splitting, ROC/AUC, Youden cutoff, confusion metrics and feature sweeps."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .features import FeatureMatrix, apply_normalizer, fit_normalizer
from .selection import rank_features, select_top_n

# ------------------------------------------------------------------ splitting


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train fraction must lie in (0, 1)")
        if not self.stratified:
            raise ValueError("only stratified splits are supported")


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def stratified_split(labels, spec: SplitSpec = SplitSpec()):
    """Per-class shuffled partition; returns sorted (train, test) index arrays.

    Each class contributes ``round(test_fraction * n_class)`` rows to the test set.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(spec.seed)
    test_frac = 1.0 - spec.train_fraction
    train, test = [], []
    for c in (0, 1):
        idx = np.flatnonzero(labels == c)
        if idx.size == 0:
            raise ValueError(f"class {c} has no samples")
        idx = rng.permutation(idx)
        n_test = _round_half_up(test_frac * idx.size)
        test.append(idx[:n_test])
        train.append(idx[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


# ------------------------------------------------------------------------ ROC


@dataclass
class RocCurve:
    thresholds: np.ndarray  # first point is +inf (nothing predicted positive)
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    fp: np.ndarray  # cumulative counts behind each point
    tp: np.ndarray
    n_pos: int
    n_neg: int

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", "fpr", "tpr"])
            for t, f, p in zip(self.thresholds, self.fpr, self.tpr):
                w.writerow(["inf" if math.isinf(t) else format(t, ".17g"), format(f, ".17g"), format(p, ".17g")])


def roc_curve(scores, labels) -> RocCurve:
    """ROC with one point per distinct score; tied scores move as one step."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be binary 0/1")
    n_pos = int(np.sum(labels == 1))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both classes present")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    pos = (labels[order] == 1).astype(np.int64)
    last = np.r_[np.flatnonzero(s[1:] != s[:-1]), s.size - 1]
    tp = np.r_[0, np.cumsum(pos)[last]]
    fp = np.r_[0, np.cumsum(1 - pos)[last]]
    thresholds = np.r_[np.inf, s[last]]
    # exact trapezoid on integer counts, one division at the end
    area2 = int(np.sum((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1])))
    auc = area2 / (2 * n_pos * n_neg)
    return RocCurve(thresholds, fp / n_neg, tp / n_pos, auc, fp, tp, n_pos, n_neg)


def auc_score(scores, labels) -> float:
    return roc_curve(scores, labels).auc


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be nonnegative")


def specificity(cm: ConfusionMatrix) -> float:
    if cm.fp + cm.tn == 0:
        raise ZeroDivisionError("specificity undefined without negatives")
    return cm.tn / (cm.fp + cm.tn) * 100.0


def sensitivity(cm: ConfusionMatrix) -> float:
    if cm.tp + cm.fn == 0:
        raise ZeroDivisionError("sensitivity undefined without positives")
    return cm.tp / (cm.tp + cm.fn) * 100.0


def confusion_metrics(cm: ConfusionMatrix) -> tuple[float, float]:
    """(specificity %, sensitivity %)."""
    return specificity(cm), sensitivity(cm)


def confusion_at(scores, labels, threshold: float) -> ConfusionMatrix:
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    pred = scores >= threshold
    return ConfusionMatrix(
        tp=int(np.sum(pred & (labels == 1))),
        fp=int(np.sum(pred & (labels == 0))),
        tn=int(np.sum(~pred & (labels == 0))),
        fn=int(np.sum(~pred & (labels == 1))),
    )


@dataclass(frozen=True)
class Cutoff:
    threshold: float
    specificity_pct: float
    sensitivity_pct: float
    confusion: ConfusionMatrix


def optimal_cutoff(curve: RocCurve) -> Cutoff:
    """Finite threshold maximizing Sp + Se; ties go to the higher threshold."""
    tn = curve.n_neg - curve.fp[1:]
    fn = curve.n_pos - curve.tp[1:]
    # compare Sp+Se exactly as the integer tn*P + tp*N
    j_num = tn * curve.n_pos + curve.tp[1:] * curve.n_neg
    i = int(np.argmax(j_num)) + 1  # thresholds descend, so argmax picks the highest on ties
    cm = ConfusionMatrix(int(curve.tp[i]), int(curve.fp[i]), int(tn[i - 1]), int(fn[i - 1]))
    sp, se = confusion_metrics(cm)
    return Cutoff(float(curve.thresholds[i]), sp, se, cm)


GUIDELINES = (
    (0.9, "Excellent discrimination"),
    (0.8, "Good discrimination"),
    (0.7, "Acceptable discrimination"),
    (0.6, "Poor discrimination"),
)


def guideline(auc: float) -> str:
    """AUC interpretation band; a value on a boundary belongs to the higher band."""
    for lower, text in GUIDELINES:
        if auc >= lower:
            return text
    return "No discrimination"


@dataclass
class EvalReport:
    auc: float
    threshold: float
    specificity_pct: float
    sensitivity_pct: float
    confusion: dict
    guideline: str
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        extra = d.pop("extra")
        d.update(extra)
        return d

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def evaluate(scores, labels, **extra) -> tuple[EvalReport, RocCurve]:
    curve = roc_curve(scores, labels)
    cut = optimal_cutoff(curve)
    report = EvalReport(
        auc=curve.auc,
        threshold=cut.threshold,
        specificity_pct=cut.specificity_pct,
        sensitivity_pct=cut.sensitivity_pct,
        confusion=asdict(cut.confusion),
        guideline=guideline(curve.auc),
        extra=extra,
    )
    return report, curve


# --------------------------------------------------------------------- sweeps


@dataclass
class SweepResult:
    series: dict[str, list[tuple[int, float]]]  # label -> [(n, auc), ...]
    best_label: str
    best_n: int
    best_auc: float
    specificity_pct: float
    sensitivity_pct: float
    chosen: dict = field(default_factory=dict)  # per-series, per-n hyperparameter picks

    def write_series_csv(self, path, label: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "auc"])
            for n, auc in self.series[label]:
                w.writerow([n, format(auc, ".17g")])


def validation_carve(labels, fraction: float, seed: int):
    """Stratified (fit, validation) split of a training set."""
    return stratified_split(labels, SplitSpec(train_fraction=1.0 - fraction, seed=seed))


def rank_training_features(train: FeatureMatrix):
    """Chi-square ranking of the min-max normalized training matrix."""
    return rank_features(apply_normalizer(fit_normalizer(train), train))


def prepare_top_n(train: FeatureMatrix, test: FeatureMatrix, ranking, n: int):
    """Select top-n columns, fit min-max on train, apply to both."""
    tr = select_top_n(ranking, train, n)
    te = select_top_n(ranking, test, n)
    params = fit_normalizer(tr)
    return apply_normalizer(params, tr), apply_normalizer(params, te), params


def feature_sweep(train: FeatureMatrix, test: FeatureMatrix, fit_score, labels_for=("default",),
                  n_values=None, seed: int = 0, threads: int = 1) -> SweepResult:
    """AUC on ``test`` for every top-N feature subset, ranked on ``train`` only.

    ``fit_score(label, train_n, test_n, seed) -> (scores, chosen)`` fits a
    classifier on the normalized top-N training matrix and scores the test rows.
    One series is produced per entry of ``labels_for``.
    """
    ranking = rank_training_features(train)
    if n_values is None:
        n_values = range(1, train.n_features + 1)
    n_values = list(n_values)
    jobs = [(label, n) for label in labels_for for n in n_values]

    def run(job):
        label, n = job
        tr, te, _ = prepare_top_n(train, test, ranking, n)
        job_seed = int(np.random.SeedSequence([seed, n]).generate_state(1)[0])
        scores, chosen = fit_score(label, tr, te, job_seed)
        return scores, chosen

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    series = {label: [] for label in labels_for}
    chosen = {label: {} for label in labels_for}
    best = None
    for (label, n), (scores, pick) in zip(jobs, results):
        auc = auc_score(scores, test.labels)
        series[label].append((n, auc))
        chosen[label][n] = pick
        if best is None or auc > best[2]:
            best = (label, n, auc, scores)
    label, n, auc, scores = best
    cut = optimal_cutoff(roc_curve(scores, test.labels))
    return SweepResult(series, label, n, auc, cut.specificity_pct, cut.sensitivity_pct, chosen)
