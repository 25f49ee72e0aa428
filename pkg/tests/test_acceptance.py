"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import json
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import random_matrix, record_criterion
from oracles import central_difference, chi2_direct, max_rel_error, oracle_regions, pair_count_auc, random_mask
from tcfa.classifiers import FnnTrainConfig, fnn_predict_proba, fnn_train, knn_fit, knn_predict_proba, rf_predict_proba, rf_train
from tcfa.classifiers.fnn import init_fnn, loss_and_grads
from tcfa.cnn import BatchNorm, CnnConfig, CnnModel, Conv3x3, Dropout, EarlyStopping, MaxPool2, cnn_predict_proba, cnn_train
from tcfa.cnn import loss_and_grads as cnn_loss_and_grads
from tcfa.cnn import lr_at_step
from tcfa.evaluation import (
    ConfusionMatrix, auc_score, confusion_metrics, optimal_cutoff, roc_curve, sensitivity, specificity,
)
from tcfa.imaging import MaskImage, precise_roi_segmentation
from tcfa.pipeline import ExperimentConfig, extract_corpus, run_experiment
from tcfa.selection import rank_features, read_ranking_csv, write_ranking_csv
from tcfa.synthdata import PhantomConfig, generate_corpus

# the lighter 64x64 block plan used for end-to-end CNN runs on a single core
BENCH_BLOCKS = "1x8,1x16,1x32,1x64"
BENCH_PLAN = ((1, 8), (1, 16), (1, 32), (1, 64))


def check(number, title, ok, detail=""):
    record_criterion(number, title, bool(ok), detail)
    assert ok, f"criterion {number} failed: {detail}"


def test_criterion_01_segmentation_oracle():
    rng = np.random.default_rng(2024)
    masks = [random_mask(rng, int(rng.integers(8, 65))) for _ in range(100)]
    t = time.perf_counter()
    rois = [precise_roi_segmentation(MaskImage(m)).regions for m in masks]
    elapsed = time.perf_counter() - t
    mismatches = sum(not np.array_equal(r, oracle_regions(m)) for r, m in zip(rois, masks))
    check(1, "segmentation equals BFS oracle on 100 masks", mismatches == 0 and elapsed < 5,
          f"{mismatches} mismatches, {elapsed:.3f}s")


def test_criterion_02_feature_invariants():
    samples, _ = generate_corpus(PhantomConfig(size=1000, seed=77))
    v = extract_corpus(samples).values
    sums = np.stack([v[:, 1 + 26 * b : 27 + 26 * b].sum(axis=1) for b in range(4)], axis=1)
    sums_ok = np.all((sums == 0) | (np.abs(sums - 1) <= 1e-9))
    f1_ok = np.all((v[:, 0] >= 0) & (v[:, 0] <= 1))
    check(2, "feature invariants on 1,000 vectors", v.shape == (1000, 105) and sums_ok and f1_ok,
          f"shape {v.shape}")


def test_criterion_03_chi_square(tmp_path):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        m = random_matrix(rng, int(rng.integers(4, 201)), int(rng.integers(1, 106)))
        got = rank_features(m).scores[np.argsort(rank_features(m).order)]
        want = np.array(chi2_direct(m.values.tolist(), m.labels.tolist()))
        worst = max(worst, float(np.max(np.abs(got - want) / np.maximum(np.abs(want), 1e-300))))
    m = random_matrix(rng, 200, 105)
    write_ranking_csv(tmp_path / "ranking.csv", rank_features(m))
    total = read_ranking_csv(tmp_path / "ranking.csv").shares.sum()
    check(3, "chi-square oracle and ranking shares", worst <= 1e-9 and abs(total - 100) <= 1e-6,
          f"max rel err {worst:.2e}, shares {total:.9f}")


def test_criterion_04_auc_oracle():
    rng = np.random.default_rng(4)
    worst = 0.0
    for i in range(1000):
        n = int(rng.integers(2, 60))
        y = rng.integers(0, 2, n)
        y[:2] = [0, 1]
        levels = 2 if i % 3 == 0 else int(rng.integers(2, 1000))  # every third case is heavily tied
        s = rng.integers(0, levels, n) / levels
        worst = max(worst, abs(auc_score(s, y) - pair_count_auc(s, y)))
    exact = auc_score([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
    check(4, "trapezoid AUC equals pair-count AUC", worst <= 1e-9 and exact == 0.75,
          f"max diff {worst:.1e}, example {exact!r}")


def test_criterion_05_confusion_and_schedule():
    sp = specificity(ConfusionMatrix(tp=0, fp=1, tn=9, fn=0))
    se = sensitivity(ConfusionMatrix(tp=79, fp=0, tn=0, fn=21))
    even = confusion_metrics(ConfusionMatrix(1, 1, 1, 1))
    cut = optimal_cutoff(roc_curve([0.2, 0.8], [0, 1]))
    mult = [lr_at_step(1.0, s) for s in (0, 999, 1000, 2500)]
    ok = (
        sp == 90.0 and se == 79.0 and even == (50.0, 50.0)
        and cut.specificity_pct == cut.sensitivity_pct == 100.0
        and mult == [1.0, 1.0, 0.95, 0.9025]
    )
    check(5, "confusion metrics and stepped schedule exact", ok, f"Sp {sp}, Se {se}, multipliers {mult}")


def test_criterion_06_fnn():
    rng = np.random.default_rng(6)
    model = init_fnn([3, 4, 2], rng, alpha=1e-3)
    X = rng.normal(size=(9, 3))
    y = rng.integers(0, 2, 9)
    _, gW, gb = loss_and_grads(model, X, y)
    err = max(
        max_rel_error(g, central_difference(lambda: loss_and_grads(model, X, y)[0], p))
        for p, g in zip(model.weights + model.biases, gW + gb)
    )
    xor_x = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], float)
    xor_y = np.array([0, 1, 1, 0])
    t = time.perf_counter()
    net = fnn_train(xor_x, FnnTrainConfig(epochs=500), seed=0, labels=xor_y)
    elapsed = time.perf_counter() - t
    acc = np.mean((fnn_predict_proba(net, xor_x) > 0.5) == xor_y)
    check(6, "FNN gradient check and XOR", err < 1e-4 and acc == 1.0 and elapsed < 10,
          f"grad rel err {err:.1e}, XOR acc {acc}, {elapsed:.2f}s")


def test_criterion_07_knn():
    rng = np.random.default_rng(7)
    X = np.unique(rng.normal(size=(520, 4)), axis=0)[:500]
    y = rng.integers(0, 2, 500)
    self_ok = np.array_equal(knn_predict_proba(knn_fit(X, 1, "uniform", y), X), y)
    tx = np.array([[1.0], [2.0], [4.0], [40.0]])
    ty = np.array([1, 0, 0, 1])
    uni = knn_predict_proba(knn_fit(tx, 3, "uniform", ty), [[0.0]])[0]
    dist = knn_predict_proba(knn_fit(tx, 3, "distance", ty), [[0.0]])[0]
    ok = self_ok and abs(uni - 1 / 3) < 1e-15 and abs(dist - 4 / 7) < 1e-15
    check(7, "KNN self-scoring and weighting", ok, f"uniform {uni:.6f}, distance {dist:.6f}")


def test_criterion_08_random_forest(default_split):
    rng = np.random.default_rng(8)
    pts = []
    while len(pts) < 200:
        p = rng.uniform(0, 1, 2)
        if abs(p.sum() - 1) / np.sqrt(2) >= 0.1:
            pts.append(p)
    X = np.array(pts)
    y = (X.sum(axis=1) > 1).astype(int)
    t = time.perf_counter()
    forest = rf_train(X, 100, seed=0, labels=y)
    elapsed = time.perf_counter() - t
    acc = np.mean((rf_predict_proba(forest, X) > 0.5) == y)
    tr, te = default_split["train_n"], default_split["test_n"]
    auc = {e: auc_score(rf_predict_proba(rf_train(tr, e, seed=1), te.values), te.labels) for e in (10, 100)}
    ok = acc >= 0.99 and elapsed < 10 and auc[100] >= auc[10] - 0.02
    check(8, "RF separable accuracy and tree-count stability", ok,
          f"train acc {acc:.3f} in {elapsed:.2f}s, AUC e=10 {auc[10]:.4f}, e=100 {auc[100]:.4f}")


def test_criterion_09_cnn_mechanisms(small_corpus):
    notes = []
    shape_ok = True
    for n_blocks in range(1, 7):
        cfg = CnnConfig(side=64, blocks=tuple((1, 2) for _ in range(n_blocks)), fc=())
        x = np.zeros((1, 64, 64, 1), np.float32)
        side = 64
        for layer in CnnModel.build(cfg).layers:
            x = layer.forward(x, train=False)
            if isinstance(layer, Conv3x3):
                shape_ok &= x.shape[1:3] == (side, side)
            if isinstance(layer, MaxPool2):
                side //= 2
                shape_ok &= x.shape[1:3] == (side, side)
        shape_ok &= side == cfg.final_side
    notes.append(f"shape {shape_ok}")

    model = CnnModel.build(CnnConfig(side=16, blocks=((1, 4), (1, 4)), fc=(8,), dtype="float64"))
    model.forward(np.random.default_rng(9).uniform(0, 1, (32, 16, 16, 1)), train=True)
    bn_ok = True
    for bn in (layer for layer in model.layers if isinstance(layer, BatchNorm)):
        z = bn.last_normalized
        bn_ok &= bool(np.all(np.abs(z.mean(axis=(0, 1, 2))) < 1e-5) and np.all(np.abs(z.var(axis=(0, 1, 2)) - 1) < 1e-3))
    notes.append(f"batchnorm {bn_ok}")

    drop = Dropout(0.5, np.random.default_rng(10))
    act = np.random.default_rng(11).uniform(0.5, 2, (1, 64))
    mean = np.mean([drop.forward(act, train=True) for _ in range(10_000)], axis=0)
    drop_err = np.linalg.norm(mean - act) / np.linalg.norm(act)
    notes.append(f"dropout err {drop_err:.4f}")

    toy_cfg = CnnConfig(side=8, blocks=((2, 2),), fc=(), dropout=0.0, dtype="float64", seed=3)
    toy = CnnModel.build(toy_cfg)
    xb = np.random.default_rng(12).uniform(0, 1, (4, 8, 8, 1))
    yb = np.array([0, 1, 0, 1])
    cnn_loss_and_grads(toy, xb, yb)
    grad_err = 0.0
    for conv in (layer for layer in toy.layers if isinstance(layer, Conv3x3)):
        for k in ("W", "b"):
            analytic = conv.grads[k].copy()
            num = central_difference(lambda: cnn_loss_and_grads(toy, xb, yb), conv.params[k])
            grad_err = max(grad_err, max_rel_error(analytic, num, floor=1e-6))
    notes.append(f"conv grad err {grad_err:.1e}")

    samples = small_corpus[1]
    toy_set = [s for s in samples if s.label == 1][:16] + [s for s in samples if s.label == 0][:16]
    t = time.perf_counter()
    net, log = cnn_train(toy_set, toy_set, CnnConfig(blocks=BENCH_PLAN, epochs=200, patience=200))
    overfit_s = time.perf_counter() - t
    labels = np.array([int(s.label) for s in toy_set])
    overfit_acc = np.mean((cnn_predict_proba(net, [s.image for s in toy_set]) > 0.5) == labels)
    notes.append(f"overfit acc {overfit_acc} in {overfit_s:.0f}s")

    stop = EarlyStopping(3)
    fired = next(e for e in range(1, 20) if (stop.update(e, 0.5), stop.should_stop)[1])
    notes.append(f"patience fired at epoch {fired}")

    ok = shape_ok and bn_ok and drop_err < 0.03 and grad_err < 1e-3 and overfit_acc == 1.0 and overfit_s < 300 and fired == 4
    check(9, "CNN mechanisms", ok, ", ".join(notes))


@pytest.fixture(scope="module")
def end_to_end(tmp_path_factory):
    root = tmp_path_factory.mktemp("e2e")
    reports, times = {}, {}
    for kind in ("knn", "fnn", "rf", "cnn"):
        hyper = {"cnn.blocks": BENCH_BLOCKS, "cnn.epochs": "25"} if kind == "cnn" else {}
        t = time.perf_counter()
        rep = run_experiment(ExperimentConfig(classifier=kind, seed=42, out=str(root / kind), hyper=hyper))
        times[kind] = time.perf_counter() - t
        reports[kind] = rep
    return root, reports, times


def test_criterion_10_end_to_end(end_to_end):
    root, reports, times = end_to_end
    aucs = {k: r.auc for k, r in reports.items()}
    ranking = read_ranking_csv(root / "knn" / "ranking.csv")
    top10 = [ranking.names[i] for i in ranking.order[:10]]
    dark_cap = {"F2", "F3", "F4"} & set(top10)
    total = sum(times.values())
    ok = (
        all(aucs[k] >= 0.85 for k in ("knn", "fnn", "rf"))
        and aucs["cnn"] >= 0.90
        and "F1" in top10
        and len(dark_cap) >= 2
        and total < 15 * 60
    )
    detail = ", ".join(f"{k} {v:.4f}" for k, v in aucs.items()) + f"; top10 {top10}; {total:.0f}s"
    check(10, "synthetic end-to-end benchmark", ok, detail)


def test_criterion_11_determinism(tmp_path):
    outputs = {}
    small = PhantomConfig(size=220, seed=5)
    for kind, hyper, sweep in (
        ("knn", {}, True),
        ("fnn", {"fnn.epochs": "20"}, True),
        ("rf", {}, True),
        ("cnn", {"cnn.blocks": BENCH_BLOCKS, "cnn.epochs": "2"}, False),
    ):
        for threads in (1, 8):
            cfg = ExperimentConfig(classifier=kind, seed=11, out=str(tmp_path / f"{kind}_{threads}"), phantom=small,
                                   sweep=sweep, sweep_n="1-12", threads=threads, hyper=hyper)
            run_experiment(cfg)
            outputs[(kind, threads)] = (tmp_path / f"{kind}_{threads}" / "report.json").read_bytes()
    same = {k: outputs[(k, 1)] == outputs[(k, 8)] for k in ("knn", "fnn", "rf", "cnn")}
    parsed = json.loads(outputs[("rf", 1)])
    check(11, "byte-identical reports for threads 1 and 8", all(same.values()) and "auc" in parsed, str(same))
