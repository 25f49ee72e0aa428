"""End-to-end experiment orchestration shared by the CLI stages."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kernels
from .classifiers import (
    FnnTrainConfig,
    fnn_predict_proba,
    fnn_train,
    knn_fit,
    knn_predict_proba,
    rf_predict_proba,
    rf_train,
)
from .classifiers.forest import TREE_GRID
from .classifiers.knn import K_GRID, WEIGHTINGS
from .cnn import CnnConfig, cnn_predict_proba, cnn_train
from .evaluation import (
    SplitSpec,
    auc_score,
    evaluate,
    feature_sweep,
    prepare_top_n,
    rank_training_features,
    stratified_split,
    validation_carve,
)
from .features import FeatureMatrix, extract_features, write_feature_csv, write_normalizer_csv
from .imaging import (
    Label,
    LabeledSample,
    augment_minority,
    load_image,
    load_mask,
    precise_roi_segmentation,
    save_image,
    save_mask,
)
from .persist import save_model
from .selection import write_ranking_csv
from .synthdata import PhantomConfig, generate_corpus

log = logging.getLogger(__name__)

CLASSIFIERS = ("fnn", "knn", "rf", "cnn")
VALIDATION_FRACTION = 0.1


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def derive_seed(master: int, stage: str) -> int:
    """Per-stage seed: first 8 bytes (little-endian) of sha256("<master>/<stage>")."""
    digest = hashlib.sha256(f"{int(master)}/{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


# --------------------------------------------------------------------- corpus


def save_corpus(directory, samples, manifest=None) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for s in samples:
        save_image(d / f"{s.id}_img.pgm", s.image)
        save_mask(d / f"{s.id}_mask.pgm", s.mask)
    with open(d / "manifest.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label", "seed", "index"])
        if manifest is None:
            for i, s in enumerate(samples):
                w.writerow([s.id, int(s.label), "", i])
        else:
            for row in manifest:
                w.writerow([row.id, row.label, row.seed, row.index])


def read_manifest(directory) -> list[dict]:
    with open(Path(directory) / "manifest.csv", newline="") as fh:
        return list(csv.DictReader(fh))


def load_corpus(directory) -> list[LabeledSample]:
    d = Path(directory)
    out = []
    for row in read_manifest(d):
        sid = row["id"]
        out.append(LabeledSample(load_image(d / f"{sid}_img.pgm"), load_mask(d / f"{sid}_mask.pgm"),
                                 Label(int(row["label"])), sid))
    return out


def _map(fn, items, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def segment_corpus(samples, threads: int = 1):
    return _map(lambda s: precise_roi_segmentation(s.mask), samples, threads)


def extract_corpus(samples, rois=None, threads: int = 1) -> FeatureMatrix:
    if rois is None:
        rois = segment_corpus(samples, threads)
    rows = _map(lambda pair: extract_features(pair[0].image, pair[1]), list(zip(samples, rois)), threads)
    return FeatureMatrix([s.id for s in samples], [int(s.label) for s in samples], np.array(rows))


# ---------------------------------------------------------------- classifiers


def select_knn(train: FeatureMatrix, seed: int, k=None, weights=None):
    """Pick K and weighting by AUC on a stratified validation carve-out of ``train``."""
    ks = K_GRID if k in (None, "auto") else (int(k),)
    ws = WEIGHTINGS if weights in (None, "auto") else (weights,)
    if len(ks) == 1 and len(ws) == 1:
        return ks[0], ws[0]
    fit_idx, val_idx = validation_carve(train.labels, VALIDATION_FRACTION, seed)
    fit, val = train.subset(fit_idx), train.subset(val_idx)
    best = None
    for kk in ks:
        if kk > len(fit):
            continue
        for ww in ws:
            auc = auc_score(knn_predict_proba(knn_fit(fit, kk, ww), val.values), val.labels)
            if best is None or auc > best[0]:
                best = (auc, kk, ww)
    return best[1], best[2]


def fnn_config(hyper: dict) -> FnnTrainConfig:
    kw = {}
    for key, cast in (("epochs", int), ("learning_rate", float), ("batch_size", int), ("decay", float), ("alpha", float)):
        if f"fnn.{key}" in hyper:
            kw[key] = cast(hyper[f"fnn.{key}"])
    if "fnn.hidden" in hyper:
        kw["hidden"] = tuple(int(v) for v in str(hyper["fnn.hidden"]).split(","))
    return FnnTrainConfig(**kw)


def fit_model(kind: str, train: FeatureMatrix, hyper: dict, seed: int, threads: int = 1):
    """Train a feature classifier; returns ``(model, chosen_hyperparameters)``."""
    if kind == "knn":
        k, w = select_knn(train, seed, hyper.get("knn.k"), hyper.get("knn.weights"))
        return knn_fit(train, k, w), {"k": k, "weights": w}
    if kind == "rf":
        trees = int(hyper.get("rf.trees", 100))
        return rf_train(train, trees, seed, threads=threads), {"trees": trees}
    if kind == "fnn":
        cfg = fnn_config(hyper)
        return fnn_train(train, cfg, seed), {"epochs": cfg.epochs}
    raise ValueError(f"not a feature classifier: {kind!r}")


def predict(kind: str, model, X) -> np.ndarray:
    if kind == "knn":
        return knn_predict_proba(model, X)
    if kind == "rf":
        return rf_predict_proba(model, X)
    if kind == "fnn":
        return fnn_predict_proba(model, X)
    raise ValueError(f"not a feature classifier: {kind!r}")


def sweep_features(kind: str, train: FeatureMatrix, test: FeatureMatrix, hyper: dict, seed: int,
                   n_values=None, threads: int = 1):
    """AUC-vs-N sweep; RF gets one series per tree count in TREE_GRID."""
    if kind == "rf":
        labels = tuple(f"e={t}" for t in TREE_GRID)
    else:
        labels = (kind,)

    def fit_score(label, tr, te, job_seed):
        h = dict(hyper)
        if kind == "rf":
            h["rf.trees"] = int(label.split("=")[1])
        model, chosen = fit_model(kind, tr, h, job_seed)
        return predict(kind, model, te.values), chosen

    return feature_sweep(train, test, fit_score, labels, n_values, seed, threads)


def parse_n_values(spec, n_max: int = 105):
    """'1-105', '5,10,20' or '1-20,50' -> sorted list of ints."""
    if spec is None or spec == "":
        return list(range(1, n_max + 1))
    out = set()
    for part in str(spec).split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-")
            out.update(range(int(lo), int(hi) + 1))
        else:
            out.add(int(part))
    bad = [n for n in out if not 1 <= n <= n_max]
    if bad:
        raise ValueError(f"feature counts out of range 1..{n_max}: {sorted(bad)}")
    return sorted(out)


def cnn_config(hyper: dict, side: int, seed: int) -> CnnConfig:
    kw = {"side": side, "seed": seed}
    if "cnn.blocks" in hyper:
        kw["blocks"] = tuple(tuple(int(v) for v in b.split("x")) for b in str(hyper["cnn.blocks"]).split(","))
    if "cnn.fc" in hyper:
        kw["fc"] = tuple(int(v) for v in str(hyper["cnn.fc"]).split(","))
    for key, cast in (("epochs", int), ("learning_rate", float), ("batch_size", int), ("patience", int),
                      ("dropout", float), ("gamma", float), ("dtype", str)):
        if f"cnn.{key}" in hyper:
            kw[key] = cast(hyper[f"cnn.{key}"])
    return CnnConfig(**kw)


# ----------------------------------------------------------------- experiment


@dataclass
class ExperimentConfig:
    classifier: str = "knn"
    seed: int = 42
    out: str | None = None
    corpus: str | None = None
    phantom: PhantomConfig | None = None
    split: SplitSpec = field(default_factory=SplitSpec)
    sweep: bool = False
    sweep_n: str | None = None
    n_features: int = 105
    threads: int = 1
    hyper: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.classifier not in CLASSIFIERS:
            raise ValueError(f"classifier must be one of {CLASSIFIERS}, got {self.classifier!r}")
        if self.corpus is not None and self.phantom is not None:
            raise ValueError("give either a corpus path or a phantom config, not both")
        if self.seed is None:
            raise ValueError("a master seed is required")

    def echo(self) -> dict:
        d = asdict(self)
        d["phantom"] = None if self.phantom is None else asdict(self.phantom)
        d["split"] = asdict(self.split)
        return d


def _split_rows(ids, train_idx, test_idx):
    subset = {}
    for i in train_idx:
        subset[ids[i]] = "train"
    for i in test_idx:
        subset[ids[i]] = "test"
    return [(sid, subset[sid]) for sid in ids]


def write_split_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "subset"])
        w.writerows(rows)


def read_split_csv(path) -> dict[str, str]:
    with open(path, newline="") as fh:
        return {row["id"]: row["subset"] for row in csv.DictReader(fh)}


def _check_run_dir(out: Path) -> None:
    if (out / "report.json").exists():
        raise StageError("setup", f"{out} already holds a completed run; refusing to overwrite")


def _commit(tmp: Path, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for item in sorted(tmp.iterdir()):
        target = out / item.name
        if target.is_dir():
            shutil.rmtree(target)
        shutil.move(str(item), str(target))
    tmp.rmdir()


def run_experiment(cfg: ExperimentConfig):
    """Run one experiment; returns the :class:`EvalReport`. Artifacts go to ``cfg.out``."""
    if cfg.out is None:
        raise StageError("setup", "an output directory is required")
    out = Path(cfg.out)
    _check_run_dir(out)
    tmp = out.parent / f".{out.name}.partial"
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)

    seeds = {name: derive_seed(cfg.seed, name) for name in
             ("generate", "split", "model", "sweep", "augment", "validation")}
    timings = {}
    stage = "setup"
    try:
        stage = "generate"
        t0 = time.perf_counter()
        if cfg.corpus is not None:
            samples = load_corpus(cfg.corpus)
        else:
            phantom = replace(cfg.phantom or PhantomConfig(), seed=seeds["generate"])
            samples, _ = generate_corpus(phantom, cfg.threads)
        timings[stage] = time.perf_counter() - t0
        labels = np.array([int(s.label) for s in samples])

        stage = "split"
        spec = replace(cfg.split, seed=seeds["split"])
        train_idx, test_idx = stratified_split(labels, spec)
        ids = [s.id for s in samples]
        write_split_csv(tmp / "split.csv", _split_rows(ids, train_idx, test_idx))

        artifacts = ["split.csv"]
        if cfg.classifier == "cnn":
            report = _run_cnn(cfg, samples, train_idx, test_idx, seeds, tmp, artifacts, timings)
        else:
            report = _run_features(cfg, samples, train_idx, test_idx, seeds, tmp, artifacts, timings)

        stage = "report"
        artifacts += ["roc.csv", "run_log.json"]
        report.extra["artifacts"] = sorted(artifacts)
        report.to_json(tmp / "report.json")
        with open(tmp / "run_log.json", "w") as fh:
            json.dump({"config": cfg.echo(), "seeds": seeds, "backend": kernels.BACKEND,
                       "timings_s": timings}, fh, indent=2, sort_keys=True, default=str)
        _commit(tmp, out)
        return report
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, f"{type(exc).__name__}: {exc}") from exc
    finally:
        if tmp.exists():
            shutil.rmtree(tmp, ignore_errors=True)


def _run_features(cfg, samples, train_idx, test_idx, seeds, tmp, artifacts, timings):
    t0 = time.perf_counter()
    feats = extract_corpus(samples, threads=cfg.threads)
    timings["extract"] = time.perf_counter() - t0
    write_feature_csv(tmp / "features.csv", feats)
    artifacts.append("features.csv")
    train, test = feats.subset(train_idx), feats.subset(test_idx)

    ranking = rank_training_features(train)
    write_ranking_csv(tmp / "ranking.csv", ranking)
    artifacts.append("ranking.csv")

    hyper = dict(cfg.hyper)
    n = cfg.n_features
    extra = {}
    if cfg.sweep:
        t0 = time.perf_counter()
        res = sweep_features(cfg.classifier, train, test, hyper, seeds["sweep"],
                             parse_n_values(cfg.sweep_n, feats.n_features), cfg.threads)
        timings["sweep"] = time.perf_counter() - t0
        for label in res.series:
            name = "sweep.csv" if len(res.series) == 1 else f"sweep_{label.replace('=', '')}.csv"
            res.write_series_csv(tmp / name, label)
            artifacts.append(name)
        n = res.best_n
        seeds["sweep_jobs"] = {str(k): int(np.random.SeedSequence([seeds["sweep"], k]).generate_state(1)[0])
                               for k in parse_n_values(cfg.sweep_n, feats.n_features)}
        if cfg.classifier == "rf":
            hyper["rf.trees"] = int(res.best_label.split("=")[1])
        extra["sweep_best"] = {"series": res.best_label, "n": res.best_n, "auc": res.best_auc}

    t0 = time.perf_counter()
    tr, te, params = prepare_top_n(train, test, ranking, n)
    write_normalizer_csv(tmp / "normalizer.csv", params)
    model, chosen = fit_model(cfg.classifier, tr, hyper, seeds["model"], cfg.threads)
    save_model(tmp / "model.npz", model)
    artifacts += ["normalizer.csv", "model.npz"]
    scores = predict(cfg.classifier, model, te.values)
    timings["train_eval"] = time.perf_counter() - t0

    report, curve = evaluate(scores, te.labels, classifier=cfg.classifier, n_features=n,
                             features=list(tr.names), hyperparameters=chosen, seed=cfg.seed, **extra)
    curve.to_csv(tmp / "roc.csv")
    return report


def _run_cnn(cfg, samples, train_idx, test_idx, seeds, tmp, artifacts, timings):
    train = [samples[i] for i in train_idx]
    test = [samples[i] for i in test_idx]
    fit_rel, val_rel = validation_carve([int(s.label) for s in train], VALIDATION_FRACTION, seeds["validation"])
    fit = augment_minority([train[i] for i in fit_rel], seeds["augment"])
    val = [train[i] for i in val_rel]
    ccfg = cnn_config(cfg.hyper, samples[0].image.width, seeds["model"])
    t0 = time.perf_counter()
    model, tlog = cnn_train(fit, val, ccfg, log_fn=lambda r: log.info("cnn epoch %d val_loss %.4f", r.epoch, r.val_loss))
    timings["cnn_train"] = time.perf_counter() - t0
    tlog.to_csv(tmp / "train_log.csv")
    save_model(tmp / "model.npz", model)
    artifacts += ["train_log.csv", "model.npz"]
    scores = cnn_predict_proba(model, [s.image for s in test])
    report, curve = evaluate(scores, [int(s.label) for s in test], classifier="cnn",
                             augmented_train=len(fit), stop_reason=tlog.stop_reason,
                             best_epoch=tlog.best_epoch, epochs_run=len(tlog.epochs), seed=cfg.seed)
    curve.to_csv(tmp / "roc.csv")
    return report
