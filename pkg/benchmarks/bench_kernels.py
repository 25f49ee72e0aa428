"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Times the lumen-distance BFS, a single best-split search, and a 10-tree
forest fit with each backend, and checks that both give identical output.
"""

import argparse
import sys
import timeit

import numpy as np

from tcfa import _fallback
from tcfa.classifiers import forest
from tcfa.imaging import Tissue
from tcfa.synthdata import PhantomConfig, generate_phantom

try:
    from tcfa import _kernels
except ImportError:
    _kernels = None


def phantom_mask(side):
    cfg = PhantomConfig(side=side, size=10, seed=1)
    return np.ascontiguousarray(generate_phantom(cfg, 0).mask.labels)


def split_case(n=2000, f=105, seed=0):
    rng = np.random.default_rng(seed)
    X = np.ascontiguousarray(rng.uniform(0, 1, (n, f)))
    y = (X[:, 0] + 0.2 * rng.normal(size=n) > 0.5).astype(np.int64)
    samples = np.arange(n, dtype=np.int64)
    counts = rng.integers(1, 4, n).astype(np.int64)
    order = rng.permutation(f).astype(np.int64)
    return X, samples, counts, y, 1.0, 1.0, order, int(np.ceil(np.sqrt(f)))


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def fit_forest(impl, X, y):
    saved = forest.best_split
    forest.best_split = impl.best_split
    try:
        return forest.rf_train(X, 10, seed=0, labels=y)
    finally:
        forest.best_split = saved


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; only the fallback is available")
        return 1

    rows = []
    for side in (64, 256, 512):
        mask = phantom_mask(side)
        lum, plq = int(Tissue.LUMEN), int(Tissue.PLAQUE)
        same = np.array_equal(_kernels.geodesic_distance(mask, lum, plq), _fallback.geodesic_distance(mask, lum, plq))
        rows.append((f"bfs {side}x{side}",
                     best_of(lambda: _kernels.geodesic_distance(mask, lum, plq), args.repeat),
                     best_of(lambda: _fallback.geodesic_distance(mask, lum, plq), max(1, args.repeat // 2)), same))

    case = split_case()
    same = _kernels.best_split(*case) == _fallback.best_split(*case)
    rows.append(("best_split 2000x105", best_of(lambda: _kernels.best_split(*case), args.repeat),
                 best_of(lambda: _fallback.best_split(*case), args.repeat), same))

    X, _, _, y, *_ = split_case(880, 105, 1)
    a, b = fit_forest(_kernels, X, y), fit_forest(_fallback, X, y)
    same = all(np.array_equal(s.threshold, t.threshold) and np.array_equal(s.feature, t.feature)
               for s, t in zip(a.trees, b.trees))
    rows.append(("rf fit 10 trees 880x105", best_of(lambda: fit_forest(_kernels, X, y), 1),
                 best_of(lambda: fit_forest(_fallback, X, y), 1), same))

    print(f"{'kernel':26s} {'cython s':>10s} {'python s':>10s} {'speedup':>8s}  identical")
    for name, tc, tp, same in rows:
        print(f"{name:26s} {tc:10.4f} {tp:10.4f} {tp / tc:8.1f}x  {same}")
    return 0 if all(r[3] for r in rows) else 2


if __name__ == "__main__":
    sys.exit(main())
