"""Model files: a numpy ``.npz`` archive with a JSON header.

The header (array ``__meta__``) records the format name, version, model kind
and hyperparameters. Parameters are stored as float64 and loaded back into the
model's own dtype, so predictions after a round trip are bit-identical.
"""

from __future__ import annotations

import json
from dataclasses import asdict

import numpy as np

from .classifiers import FnnModel, KnnModel, RfModel
from .classifiers.forest import Tree
from .cnn import CnnConfig, CnnModel

FORMAT = "tcfa-model"
VERSION = 1


def _dump(model) -> tuple[dict, dict]:
    if isinstance(model, FnnModel):
        arrays = {}
        for i, (W, b) in enumerate(zip(model.weights, model.biases)):
            arrays[f"W{i}"] = W
            arrays[f"b{i}"] = b
        meta = {"kind": "fnn", "layers": len(model.weights), "sizes": model.sizes, "alpha": model.alpha,
                "history": model.history}
        return meta, arrays
    if isinstance(model, KnnModel):
        meta = {"kind": "knn", "k": model.k, "weights": model.weights}
        return meta, {"X": model.X, "y": model.y}
    if isinstance(model, RfModel):
        arrays = {}
        for i, t in enumerate(model.trees):
            for name in ("feature", "threshold", "left", "right", "value"):
                arrays[f"t{i}_{name}"] = getattr(t, name)
        meta = {"kind": "rf", "trees": len(model.trees), "class_weights": list(model.class_weights),
                "n_features": model.n_features, "seed": model.seed}
        return meta, arrays
    if isinstance(model, CnnModel):
        meta = {"kind": "cnn", "config": asdict(model.config)}
        return meta, model.state()
    raise TypeError(f"cannot serialize {type(model).__name__}")


def save_model(path, model) -> None:
    meta, arrays = _dump(model)
    meta.update(format=FORMAT, version=VERSION)
    out = {}
    for k, v in arrays.items():
        v = np.asarray(v)
        out[k] = v.astype(np.float64) if v.dtype.kind == "f" else v
    out["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **out)


def load_model(path):
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(bytes(z["__meta__"]).decode())
        arrays = {k: z[k] for k in z.files if k != "__meta__"}
    if meta.get("format") != FORMAT:
        raise ValueError(f"{path}: not a {FORMAT} file")
    if meta.get("version") != VERSION:
        raise ValueError(f"{path}: unsupported model version {meta.get('version')}")
    kind = meta["kind"]
    if kind == "fnn":
        n = meta["layers"]
        return FnnModel([arrays[f"W{i}"] for i in range(n)], [arrays[f"b{i}"] for i in range(n)],
                        meta["alpha"], list(meta["history"]))
    if kind == "knn":
        return KnnModel(arrays["X"], arrays["y"].astype(np.int64), meta["k"], meta["weights"])
    if kind == "rf":
        trees = [
            Tree(*(arrays[f"t{i}_{name}"] for name in ("feature", "threshold", "left", "right", "value")))
            for i in range(meta["trees"])
        ]
        return RfModel(trees, tuple(meta["class_weights"]), meta["n_features"], meta["seed"])
    if kind == "cnn":
        cfg = meta["config"]
        cfg["blocks"] = tuple(tuple(b) for b in cfg["blocks"])
        cfg["fc"] = tuple(cfg["fc"])
        model = CnnModel.build(CnnConfig(**cfg))
        model.load_state(arrays)
        return model
    raise ValueError(f"{path}: unknown model kind {kind!r}")
