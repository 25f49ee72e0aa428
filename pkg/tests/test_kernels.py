import os
import subprocess
import sys

import numpy as np
import pytest

from oracles import random_mask
from tcfa import _fallback, kernels

compiled = pytest.importorskip("tcfa._kernels")


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


def test_env_switch_forces_fallback():
    out = subprocess.run(
        [sys.executable, "-c", "from tcfa import kernels; print(kernels.BACKEND)"],
        env={**os.environ, "TCFA_PURE_PYTHON": "1"}, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"


def test_geodesic_backends_agree():
    rng = np.random.default_rng(0)
    for _ in range(40):
        labels = np.ascontiguousarray(random_mask(rng, int(rng.integers(8, 65))))
        a = compiled.geodesic_distance(labels, 1, 2)
        b = _fallback.geodesic_distance(labels, 1, 2)
        assert a.dtype == b.dtype == np.int32 and np.array_equal(a, b)


def _split_case(rng):
    n, f = int(rng.integers(2, 60)), int(rng.integers(1, 8))
    # coarse values so that ties and constant features occur often
    X = np.ascontiguousarray(rng.integers(0, 4, (n, f)).astype(np.float64) / rng.integers(1, 4))
    samples = np.sort(rng.choice(n, size=int(rng.integers(2, n + 1)), replace=False)).astype(np.int64)
    counts = rng.integers(1, 4, samples.size).astype(np.int64)
    y = rng.integers(0, 2, samples.size).astype(np.int64)
    order = rng.permutation(f).astype(np.int64)
    return X, samples, counts, y, float(rng.uniform(0.5, 3)), float(rng.uniform(0.5, 3)), order, int(rng.integers(1, f + 1))


def test_best_split_backends_agree():
    rng = np.random.default_rng(1)
    for _ in range(300):
        args = _split_case(rng)
        a = compiled.best_split(*args)
        b = _fallback.best_split(*args)
        assert a[0] == b[0] and a[1] == b[1] and (a[2] == b[2] or (np.isinf(a[2]) and np.isinf(b[2])))


def test_best_split_finds_clean_cut():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    samples = np.arange(4, dtype=np.int64)
    counts = np.ones(4, np.int64)
    y = np.array([0, 0, 1, 1], np.int64)
    for impl in (compiled, _fallback):
        f, thr, imp = impl.best_split(X, samples, counts, y, 1.0, 1.0, np.zeros(1, np.int64), 1)
        assert f == 0 and thr == 1.5 and imp == 0.0


def test_constant_features_give_no_split():
    X = np.ones((4, 2))
    args = (X, np.arange(4, dtype=np.int64), np.ones(4, np.int64), np.array([0, 1, 0, 1], np.int64), 1.0, 1.0,
            np.array([0, 1], np.int64), 2)
    for impl in (compiled, _fallback):
        assert impl.best_split(*args)[0] == -1
