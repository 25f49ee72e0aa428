"""Command-line entry point: ``tcfa <stage> [options]``.

Stages consume and produce plain files (PGM, CSV, JSON, ``.npz`` models), so
they can be chained by hand or run together with ``run-all``.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import shutil
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import kernels
from .cnn import cnn_predict_proba, cnn_train
from .evaluation import (
    SplitSpec, evaluate, prepare_top_n, rank_training_features, stratified_split, validation_carve,
)
from .features import read_feature_csv, read_normalizer_csv, apply_normalizer, write_feature_csv, write_normalizer_csv
from .imaging import augment_minority, load_roi, save_roi
from .persist import load_model, save_model
from .pipeline import (
    CLASSIFIERS,
    ExperimentConfig,
    StageError,
    VALIDATION_FRACTION,
    _split_rows,
    cnn_config,
    derive_seed,
    extract_corpus,
    fit_model,
    load_corpus,
    parse_n_values,
    predict,
    read_split_csv,
    run_experiment,
    save_corpus,
    segment_corpus,
    sweep_features,
    write_split_csv,
)
from .selection import write_ranking_csv
from .synthdata import PhantomConfig, generate_corpus

log = logging.getLogger("tcfa")

TOP_LEVEL = {"classifier", "seed", "out", "corpus", "sweep", "sweep.n", "n_features", "threads",
             "split.train_fraction"}
HYPER_PREFIXES = ("knn.", "rf.", "fnn.", "cnn.")


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    text = Path(path).read_text()
    parser.read_string("[run]\n" + text)
    return dict(parser["run"])


def _truthy(v) -> bool:
    return str(v).strip().lower() in ("1", "true", "yes", "on")


def phantom_from(values: dict[str, str]) -> PhantomConfig | None:
    kw = {}
    types = {f.name: f.type for f in fields(PhantomConfig)}
    for key, raw in values.items():
        if not key.startswith("phantom."):
            continue
        name = key[len("phantom."):]
        if name not in types:
            raise ValueError(f"unknown phantom setting {name!r}")
        if "tuple" in str(types[name]):
            kw[name] = tuple(float(v) for v in raw.split(","))
        elif types[name] in ("int", int):
            kw[name] = int(raw)
        else:
            kw[name] = float(raw)
    return PhantomConfig(**kw) if kw else None


def experiment_from(values: dict[str, str]) -> ExperimentConfig:
    unknown = [k for k in values if k not in TOP_LEVEL and not k.startswith(HYPER_PREFIXES + ("phantom.",))]
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "seed" not in values:
        raise ValueError("a seed is required (config key 'seed' or --seed)")
    hyper = {k: v for k, v in values.items() if k.startswith(HYPER_PREFIXES)}
    phantom = phantom_from(values)
    corpus = values.get("corpus")
    if corpus is None and phantom is None:
        phantom = PhantomConfig()
    return ExperimentConfig(
        classifier=values.get("classifier", "knn"),
        seed=int(values["seed"]),
        out=values.get("out"),
        corpus=corpus,
        phantom=phantom,
        split=SplitSpec(train_fraction=float(values.get("split.train_fraction", 0.8))),
        sweep=_truthy(values.get("sweep", "false")),
        sweep_n=values.get("sweep.n"),
        n_features=int(values.get("n_features", 105)),
        threads=int(values.get("threads", 1)),
        hyper=hyper,
    )


def _collect(args) -> dict[str, str]:
    values = read_config(args.config) if getattr(args, "config", None) else {}
    for flag, key in (("seed", "seed"), ("out", "out"), ("classifier", "classifier"), ("threads", "threads"),
                      ("corpus", "corpus"), ("n_features", "n_features"), ("sweep_n", "sweep.n")):
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = str(v)
    if getattr(args, "sweep", False):
        values["sweep"] = "true"
    return values


# --------------------------------------------------------------------- stages


def cmd_generate(args, values):
    seed = int(values.get("seed", 0))
    phantom = phantom_from(values) or PhantomConfig()
    phantom = replace(phantom, seed=derive_seed(seed, "generate"))
    samples, manifest = generate_corpus(phantom, int(values.get("threads", 1)))
    save_corpus(args.out, samples, manifest)
    n_tcfa = sum(int(s.label) for s in samples)
    print(f"wrote {len(samples)} phantoms ({n_tcfa} TCFA) to {args.out}")


def cmd_segment(args, values):
    samples = load_corpus(args.corpus)
    rois = segment_corpus(samples, int(values.get("threads", 1)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for s, roi in zip(samples, rois):
        save_roi(out / f"{s.id}_roi.pgm", roi)
    shutil.copyfile(Path(args.corpus) / "manifest.csv", out / "manifest.csv")
    print(f"segmented {len(samples)} masks into {out}")


def cmd_extract(args, values):
    samples = load_corpus(args.corpus)
    rois = None
    if args.roi:
        rois = [load_roi(Path(args.roi) / f"{s.id}_roi.pgm") for s in samples]
    m = extract_corpus(samples, rois, int(values.get("threads", 1)))
    write_feature_csv(args.out, m)
    print(f"extracted {m.n_features} features for {len(m)} samples to {args.out}")


def _train_rows(m, split_path):
    if not split_path:
        return m
    subset = read_split_csv(split_path)
    return m.subset([i for i, sid in enumerate(m.ids) if subset.get(sid) == "train"])


def cmd_select(args, values):
    m = _train_rows(read_feature_csv(args.features), args.split)
    r = rank_training_features(m)
    write_ranking_csv(args.out, r)
    print(f"ranked {len(r)} features on {len(m)} rows; top 10: {', '.join(r.names[i] for i in r.order[:10])}")


def _split(labels, ids, values):
    seed = int(values["seed"])
    spec = SplitSpec(float(values.get("split.train_fraction", 0.8)), derive_seed(seed, "split"))
    tr, te = stratified_split(labels, spec)
    return tr, te, _split_rows(ids, tr, te)


def cmd_train(args, values):
    cfg = experiment_from(values)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed_model = derive_seed(cfg.seed, "model")
    meta = {"classifier": cfg.classifier, "seed": cfg.seed, "backend": kernels.BACKEND}
    if cfg.classifier == "cnn":
        samples = load_corpus(args.corpus)
        tr, te, rows = _split(np.array([int(s.label) for s in samples]), [s.id for s in samples], values)
        train = [samples[i] for i in tr]
        fit_rel, val_rel = validation_carve([int(s.label) for s in train], VALIDATION_FRACTION,
                                            derive_seed(cfg.seed, "validation"))
        fit = augment_minority([train[i] for i in fit_rel], derive_seed(cfg.seed, "augment"))
        ccfg = cnn_config(cfg.hyper, samples[0].image.width, seed_model)
        model, tlog = cnn_train(fit, [train[i] for i in val_rel], ccfg)
        tlog.to_csv(out / "train_log.csv")
        meta.update(stop_reason=tlog.stop_reason, best_epoch=tlog.best_epoch)
    else:
        m = read_feature_csv(args.features)
        tr, te, rows = _split(m.labels, m.ids, values)
        train, test = m.subset(tr), m.subset(te)
        ranking = rank_training_features(train)
        write_ranking_csv(out / "ranking.csv", ranking)
        trn, _, params = prepare_top_n(train, test, ranking, cfg.n_features)
        write_normalizer_csv(out / "normalizer.csv", params)
        model, chosen = fit_model(cfg.classifier, trn, cfg.hyper, seed_model, cfg.threads)
        meta.update(features=list(trn.names), hyperparameters=chosen)
    write_split_csv(out / "split.csv", rows)
    save_model(out / "model.npz", model)
    (out / "train.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"trained {cfg.classifier} model in {out}")


def cmd_eval(args, values):
    mdir = Path(args.model_dir)
    meta = json.loads((mdir / "train.json").read_text())
    subset = read_split_csv(mdir / "split.csv")
    model = load_model(mdir / "model.npz")
    kind = meta["classifier"]
    if kind == "cnn":
        samples = [s for s in load_corpus(args.corpus) if subset.get(s.id) == "test"]
        scores = cnn_predict_proba(model, [s.image for s in samples])
        labels = [int(s.label) for s in samples]
    else:
        m = read_feature_csv(args.features)
        test = m.subset([i for i, sid in enumerate(m.ids) if subset.get(sid) == "test"])
        cols = [m.names.index(n) for n in meta["features"]]
        test = test.columns(cols)
        test = apply_normalizer(read_normalizer_csv(mdir / "normalizer.csv", test.names), test)
        scores = predict(kind, model, test.values)
        labels = test.labels
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report, curve = evaluate(scores, labels, classifier=kind, artifacts=["roc.csv"], seed=meta["seed"])
    curve.to_csv(out / "roc.csv")
    report.to_json(out / "report.json")
    print(json.dumps({k: report.to_dict()[k] for k in ("auc", "specificity_pct", "sensitivity_pct", "guideline")}))


def cmd_sweep(args, values):
    cfg = experiment_from(values)
    if cfg.classifier == "cnn":
        raise ValueError("the feature sweep applies to fnn, knn and rf only")
    m = read_feature_csv(args.features)
    tr, te, rows = _split(m.labels, m.ids, values)
    res = sweep_features(cfg.classifier, m.subset(tr), m.subset(te), cfg.hyper, derive_seed(cfg.seed, "sweep"),
                         parse_n_values(cfg.sweep_n, m.n_features), cfg.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for label in res.series:
        name = "sweep.csv" if len(res.series) == 1 else f"sweep_{label.replace('=', '')}.csv"
        res.write_series_csv(out / name, label)
    summary = {"best_series": res.best_label, "best_n": res.best_n, "best_auc": res.best_auc,
               "specificity_pct": res.specificity_pct, "sensitivity_pct": res.sensitivity_pct}
    (out / "sweep.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary))


def cmd_run_all(args, values):
    cfg = experiment_from(values)
    report = run_experiment(cfg)
    d = report.to_dict()
    print(json.dumps({k: d[k] for k in ("auc", "specificity_pct", "sensitivity_pct", "guideline")}))


# ----------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tcfa", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--config", help="key = value settings file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", required=out_required)
        sp.add_argument("--threads", type=int)
        return sp

    common(sub.add_parser("generate", help="write a synthetic phantom corpus"))
    sp = common(sub.add_parser("segment", help="split plaque into CAP/SUF1/SUF2/SUF3"))
    sp.add_argument("--corpus", required=True)
    sp = common(sub.add_parser("extract", help="compute the 105 features"))
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--roi", help="directory of <id>_roi.pgm; segmented on the fly if omitted")
    sp = common(sub.add_parser("select", help="chi-square ranking"))
    sp.add_argument("--features", required=True)
    sp.add_argument("--split", help="split.csv; rank on its train rows only")
    for name in ("train", "sweep"):
        sp = common(sub.add_parser(name, help=f"{name} a classifier"))
        sp.add_argument("--classifier", choices=CLASSIFIERS)
        sp.add_argument("--features")
        sp.add_argument("--corpus")
        sp.add_argument("--n-features", dest="n_features", type=int)
        sp.add_argument("--sweep-n", dest="sweep_n", help="feature counts, e.g. 1-105 or 5,10,20")
    sp = common(sub.add_parser("eval", help="score a trained model on its test split"))
    sp.add_argument("--model-dir", required=True)
    sp.add_argument("--features")
    sp.add_argument("--corpus")
    sp = common(sub.add_parser("run-all", help="full pipeline into one run directory"), out_required=False)
    sp.add_argument("--classifier", choices=CLASSIFIERS)
    sp.add_argument("--corpus")
    sp.add_argument("--sweep", action="store_true")
    sp.add_argument("--sweep-n", dest="sweep_n")
    sp.add_argument("--n-features", dest="n_features", type=int)
    return p


COMMANDS = {
    "generate": cmd_generate,
    "segment": cmd_segment,
    "extract": cmd_extract,
    "select": cmd_select,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "run-all": cmd_run_all,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        values = _collect(args)
        COMMANDS[args.command](args, values)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
