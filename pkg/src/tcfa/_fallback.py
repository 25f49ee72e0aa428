"""Pure-Python/numpy versions of the compiled kernels in ``_kernels.pyx``."""

from collections import deque

import numpy as np

UNREACHABLE = int(np.iinfo(np.int32).max)

_NEIGHBOURS = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1)]


def geodesic_distance(labels, lumen, plaque):
    labels = np.asarray(labels)
    h, w = labels.shape
    dist = np.full((h, w), -1, dtype=np.int32)
    is_plaque = labels == plaque
    dist[is_plaque] = UNREACHABLE
    queue = deque()
    for r, c in zip(*np.nonzero(labels == lumen)):
        for dr, dc in _NEIGHBOURS:
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and is_plaque[rr, cc] and dist[rr, cc] == UNREACHABLE:
                dist[rr, cc] = 1
                queue.append((rr, cc))
    while queue:
        r, c = queue.popleft()
        d = dist[r, c] + 1
        for dr, dc in _NEIGHBOURS:
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and dist[rr, cc] == UNREACHABLE:
                dist[rr, cc] = d
                queue.append((rr, cc))
    return dist


def best_split(X, samples, counts, y, w0, w1, feature_order, max_features):
    y = np.asarray(y)
    counts = np.asarray(counts, dtype=np.int64)
    c1_all = np.where(y == 1, counts, 0)
    c0_all = counts - c1_all
    t0 = int(c0_all.sum())
    t1 = int(c1_all.sum())
    best_f, best_thr, best_imp = -1, 0.0, np.inf
    visited = 0
    for f in feature_order:
        if visited >= max_features:
            break
        vals = X[samples, f]
        order = np.argsort(vals, kind="stable")
        vals = vals[order]
        if vals[0] == vals[-1]:
            continue
        visited += 1
        l0 = np.cumsum(c0_all[order])[:-1]
        l1 = np.cumsum(c1_all[order])[:-1]
        boundary = vals[:-1] != vals[1:]
        l0, l1 = l0[boundary], l1[boundary]
        wl0 = w0 * l0.astype(np.float64)
        wl1 = w1 * l1.astype(np.float64)
        wr0 = w0 * (t0 - l0).astype(np.float64)
        wr1 = w1 * (t1 - l1).astype(np.float64)
        WL = wl0 + wl1
        WR = wr0 + wr1
        imp = (WL - (wl0 * wl0 + wl1 * wl1) / WL) + (WR - (wr0 * wr0 + wr1 * wr1) / WR)
        j = int(np.argmin(imp))
        if imp[j] < best_imp:
            pos = np.nonzero(boundary)[0][j]
            a, b = vals[pos], vals[pos + 1]
            thr = (a + b) / 2.0
            if thr >= b:
                thr = a
            best_imp = float(imp[j])
            best_thr = float(thr)
            best_f = int(f)
    return best_f, best_thr, best_imp
