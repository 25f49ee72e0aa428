# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: geodesic plaque BFS and the forest split scan.

Both functions mirror ``tcfa._fallback`` exactly, including tie-breaking and
floating-point operation order, so either backend yields identical results.
"""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free
from libc.math cimport INFINITY

cnp.import_array()

UNREACHABLE = np.iinfo(np.int32).max


def geodesic_distance(const unsigned char[:, ::1] labels, unsigned char lumen,
                      unsigned char plaque):
    cdef Py_ssize_t h = labels.shape[0], w = labels.shape[1]
    cdef cnp.ndarray[cnp.int32_t, ndim=2] out = np.full((h, w), -1, dtype=np.int32)
    cdef int[:, ::1] dist = out
    cdef Py_ssize_t n = h * w
    cdef Py_ssize_t *queue = <Py_ssize_t *> malloc(n * sizeof(Py_ssize_t) + 1)
    cdef Py_ssize_t head = 0, tail = 0, r, c, rr, cc, p
    cdef int dr, dc, d
    cdef int unreachable = UNREACHABLE
    if queue == NULL:
        raise MemoryError()
    try:
        with nogil:
            for r in range(h):
                for c in range(w):
                    if labels[r, c] == plaque:
                        dist[r, c] = unreachable
            # seed: plaque pixels touching the lumen
            for r in range(h):
                for c in range(w):
                    if labels[r, c] != lumen:
                        continue
                    for dr in range(-1, 2):
                        for dc in range(-1, 2):
                            rr = r + dr
                            cc = c + dc
                            if rr < 0 or rr >= h or cc < 0 or cc >= w:
                                continue
                            if labels[rr, cc] == plaque and dist[rr, cc] == unreachable:
                                dist[rr, cc] = 1
                                queue[tail] = rr * w + cc
                                tail += 1
            while head < tail:
                p = queue[head]
                head += 1
                r = p // w
                c = p % w
                d = dist[r, c] + 1
                for dr in range(-1, 2):
                    for dc in range(-1, 2):
                        rr = r + dr
                        cc = c + dc
                        if rr < 0 or rr >= h or cc < 0 or cc >= w:
                            continue
                        if dist[rr, cc] == unreachable and labels[rr, cc] == plaque:
                            dist[rr, cc] = d
                            queue[tail] = rr * w + cc
                            tail += 1
    finally:
        free(queue)
    return out


cdef inline void _swap(double *v, long long *a, long long *b, Py_ssize_t i,
                       Py_ssize_t j) noexcept nogil:
    cdef double tv = v[i]
    cdef long long ta = a[i], tb = b[i]
    v[i] = v[j]; a[i] = a[j]; b[i] = b[j]
    v[j] = tv; a[j] = ta; b[j] = tb


cdef void _sort(double *v, long long *a, long long *b, Py_ssize_t lo,
                Py_ssize_t hi) noexcept nogil:
    # quicksort on v[lo:hi] carrying a and b; order among equal keys is irrelevant
    cdef Py_ssize_t i, j, mid
    cdef double pivot, x
    cdef long long xa, xb
    while hi - lo > 16:
        mid = lo + (hi - lo) // 2
        if v[mid] < v[lo]:
            _swap(v, a, b, mid, lo)
        if v[hi - 1] < v[lo]:
            _swap(v, a, b, hi - 1, lo)
        if v[hi - 1] < v[mid]:
            _swap(v, a, b, hi - 1, mid)
        pivot = v[mid]
        i = lo
        j = hi - 1
        while i <= j:
            while v[i] < pivot:
                i += 1
            while v[j] > pivot:
                j -= 1
            if i <= j:
                _swap(v, a, b, i, j)
                i += 1
                j -= 1
        if j - lo < hi - i:
            _sort(v, a, b, lo, j + 1)
            lo = i
        else:
            _sort(v, a, b, i, hi)
            hi = j + 1
    for i in range(lo + 1, hi):
        x = v[i]; xa = a[i]; xb = b[i]
        j = i - 1
        while j >= lo and v[j] > x:
            v[j + 1] = v[j]; a[j + 1] = a[j]; b[j + 1] = b[j]
            j -= 1
        v[j + 1] = x; a[j + 1] = xa; b[j + 1] = xb


def best_split(const double[:, ::1] X, const long long[::1] samples,
               const long long[::1] counts, const long long[::1] y,
               double w0, double w1, const long long[::1] feature_order,
               Py_ssize_t max_features):
    cdef Py_ssize_t m = samples.shape[0], nf = feature_order.shape[0]
    cdef Py_ssize_t k, i, visited = 0
    cdef long long f, best_f = -1
    cdef long long t0 = 0, t1 = 0, l0, l1
    cdef double best_thr = 0.0, best_imp = INFINITY
    cdef double wl0, wl1, wr0, wr1, WL, WR, imp, a, b, thr
    cdef double *vals = <double *> malloc(m * sizeof(double) + 8)
    cdef long long *c0 = <long long *> malloc(m * sizeof(long long) + 8)
    cdef long long *c1 = <long long *> malloc(m * sizeof(long long) + 8)
    if vals == NULL or c0 == NULL or c1 == NULL:
        free(vals); free(c0); free(c1)
        raise MemoryError()
    with nogil:
        for i in range(m):
            if y[i] == 1:
                t1 += counts[i]
            else:
                t0 += counts[i]
        for k in range(nf):
            if visited >= max_features:
                break
            f = feature_order[k]
            for i in range(m):
                vals[i] = X[samples[i], f]
                if y[i] == 1:
                    c0[i] = 0
                    c1[i] = counts[i]
                else:
                    c0[i] = counts[i]
                    c1[i] = 0
            _sort(vals, c0, c1, 0, m)
            if vals[0] == vals[m - 1]:
                continue
            visited += 1
            l0 = 0
            l1 = 0
            for i in range(m - 1):
                l0 += c0[i]
                l1 += c1[i]
                if vals[i] == vals[i + 1]:
                    continue
                wl0 = w0 * l0
                wl1 = w1 * l1
                wr0 = w0 * (t0 - l0)
                wr1 = w1 * (t1 - l1)
                WL = wl0 + wl1
                WR = wr0 + wr1
                imp = (WL - (wl0 * wl0 + wl1 * wl1) / WL) + (WR - (wr0 * wr0 + wr1 * wr1) / WR)
                if imp < best_imp:
                    a = vals[i]
                    b = vals[i + 1]
                    thr = (a + b) / 2.0
                    if thr >= b:
                        thr = a
                    best_imp = imp
                    best_thr = thr
                    best_f = f
    free(vals); free(c0); free(c1)
    return best_f, best_thr, best_imp
