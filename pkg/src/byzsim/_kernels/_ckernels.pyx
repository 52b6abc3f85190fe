# cython: language_level=3
"""Compiled versions of the kernels in ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, sqrt, fabs
from libc.stdlib cimport malloc, free

cnp.import_array()

NAME = "compiled"

ctypedef unsigned long long u64

cdef extern from *:
    """
    static inline unsigned long long byz_mulhilo(unsigned long long a,
                                                 unsigned long long b,
                                                 unsigned long long *hi) {
        unsigned __int128 p = (unsigned __int128)a * b;
        *hi = (unsigned long long)(p >> 64);
        return (unsigned long long)p;
    }
    """
    u64 byz_mulhilo(u64 a, u64 b, u64 *hi) nogil


cdef u64 PH_M0 = 0xD2E7470EE14C6C93ULL
cdef u64 PH_M1 = 0xCA5A826395121157ULL
cdef u64 PH_W0 = 0x9E3779B97F4A7C15ULL
cdef u64 PH_W1 = 0xBB67AE8584CAA73BULL


cdef inline u64 philox_block0(u64 k0, u64 k1) nogil:
    # numpy's Philox increments the counter before the first block, so the
    # first output is block(counter=[1, 0, 0, 0]).
    cdef u64 c0 = 1, c1 = 0, c2 = 0, c3 = 0
    cdef u64 hi0, lo0, hi1, lo1
    cdef int r
    for r in range(10):
        if r:
            k0 = k0 + PH_W0
            k1 = k1 + PH_W1
        lo0 = byz_mulhilo(PH_M0, c0, &hi0)
        lo1 = byz_mulhilo(PH_M1, c2, &hi1)
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
    return c0


def philox_first(seed, lineages):
    cdef u64[::1] lin = np.ascontiguousarray(lineages, dtype=np.uint64)
    cdef Py_ssize_t n = lin.shape[0], i
    out = np.empty(n, dtype=np.uint64)
    cdef u64[::1] o = out
    cdef u64 k0 = <u64>int(seed)
    with nogil:
        for i in range(n):
            o[i] = philox_block0(k0, lin[i])
    return out


cdef inline double sigmoid(double t) nogil:
    cdef double e
    if t >= 0:
        return 1.0 / (1.0 + exp(-t))
    e = exp(t)
    return e / (1.0 + e)


cdef inline double softplus(double t) nogil:
    if t > 0:
        return t + log1p(exp(-t))
    return log1p(exp(t))


def sample_grads(const double[:, ::1] A, const double[::1] b, const Py_ssize_t[::1] rows,
                 const double[::1] x, const double[::1] lam):
    cdef Py_ssize_t r = rows.shape[0], d = x.shape[0], i, j, row
    out = np.empty((r, d), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double z, bb, coef
    with nogil:
        for i in range(r):
            row = rows[i]
            z = 0.0
            for j in range(d):
                z = z + A[row, j] * x[j]
            bb = b[row]
            coef = -bb * sigmoid(-bb * z)
            for j in range(d):
                o[i, j] = coef * A[row, j] + (2.0 * lam[i]) * x[j]
    return out


def shard_stats(const double[:, ::1] A, const double[::1] b, const Py_ssize_t[::1] offsets,
                const double[::1] x, const double[::1] lam):
    cdef Py_ssize_t S = offsets.shape[0] - 1, d = x.shape[0], s, row, j
    losses = np.zeros(S, dtype=np.float64)
    grads = np.zeros((S, d), dtype=np.float64)
    cdef double[::1] L = losses
    cdef double[:, ::1] Gr = grads
    cdef double z, t, coef, size, xx = 0.0
    with nogil:
        for j in range(d):
            xx = xx + x[j] * x[j]
        for s in range(S):
            for row in range(offsets[s], offsets[s + 1]):
                z = 0.0
                for j in range(d):
                    z = z + A[row, j] * x[j]
                t = -b[row] * z
                L[s] = L[s] + softplus(t)
                coef = -b[row] * sigmoid(t)
                for j in range(d):
                    Gr[s, j] = Gr[s, j] + coef * A[row, j]
            size = <double>(offsets[s + 1] - offsets[s])
            L[s] = L[s] / size + lam[s] * xx
            for j in range(d):
                Gr[s, j] = Gr[s, j] / size + (2.0 * lam[s]) * x[j]
    return losses, grads


def topk_mask(const double[:, ::1] D, Py_ssize_t k):
    cdef Py_ssize_t r = D.shape[0], d = D.shape[1], i, j, p, cnt
    mask = np.zeros((r, d), dtype=bool)
    cdef cnp.npy_bool[:, ::1] M = mask
    cdef Py_ssize_t *idx = <Py_ssize_t *> malloc((k + 1) * sizeof(Py_ssize_t))
    cdef double *mag = <double *> malloc((k + 1) * sizeof(double))
    cdef double a
    try:
        with nogil:
            for i in range(r):
                # buf holds the current top entries sorted by magnitude descending;
                # strict comparison keeps the earlier index on ties.
                cnt = 0
                for j in range(d):
                    a = fabs(D[i, j])
                    if cnt == k and not (a > mag[k - 1]):
                        continue
                    p = cnt if cnt < k else k - 1
                    while p > 0 and a > mag[p - 1]:
                        mag[p] = mag[p - 1]
                        idx[p] = idx[p - 1]
                        p -= 1
                    mag[p] = a
                    idx[p] = j
                    if cnt < k:
                        cnt += 1
                for p in range(cnt):
                    M[i, idx[p]] = 1
    finally:
        free(idx)
        free(mag)
    return mask


cdef void insertion_sort(double *v, Py_ssize_t n) nogil:
    cdef Py_ssize_t i, j
    cdef double t
    for i in range(1, n):
        t = v[i]
        j = i
        while j > 0 and v[j - 1] > t:
            v[j] = v[j - 1]
            j -= 1
        v[j] = t


def coord_median(const double[:, ::1] X):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], i, j
    out = np.empty(d, dtype=np.float64)
    cdef double[::1] o = out
    cdef double *col = <double *> malloc(n * sizeof(double))
    try:
        with nogil:
            for j in range(d):
                for i in range(n):
                    col[i] = X[i, j]
                insertion_sort(col, n)
                if n % 2:
                    o[j] = col[n // 2]
                else:
                    o[j] = (col[n // 2 - 1] + col[n // 2]) / 2.0
    finally:
        free(col)
    return out


def cwtm(const double[:, ::1] X, Py_ssize_t B):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], i, j
    out = np.empty(d, dtype=np.float64)
    cdef double[::1] o = out
    cdef double acc
    cdef double *col = <double *> malloc(n * sizeof(double))
    try:
        with nogil:
            for j in range(d):
                for i in range(n):
                    col[i] = X[i, j]
                insertion_sort(col, n)
                acc = col[B]
                for i in range(B + 1, n - B):
                    acc = acc + col[i]
                o[j] = acc / <double>(n - 2 * B)
    finally:
        free(col)
    return out


def nnm(const double[:, ::1] X, Py_ssize_t B):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], G = n - B
    cdef Py_ssize_t i, j, p, q, t
    cdef double s, diff, key
    out = np.zeros((n, d), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double *dist = <double *> malloc(n * n * sizeof(double))
    cdef Py_ssize_t *order = <Py_ssize_t *> malloc(n * sizeof(Py_ssize_t))
    try:
        with nogil:
            for i in range(n):
                for j in range(n):
                    s = 0.0
                    for p in range(d):
                        diff = X[i, p] - X[j, p]
                        s = s + diff * diff
                    dist[i * n + j] = s
            for i in range(n):
                # stable insertion sort of indices by distance to X[i]
                for j in range(n):
                    key = dist[i * n + j]
                    q = j
                    while q > 0 and dist[i * n + order[q - 1]] > key:
                        order[q] = order[q - 1]
                        q -= 1
                    order[q] = j
                for p in range(d):
                    s = X[order[0], p]
                    for t in range(1, G):
                        s = s + X[order[t], p]
                    o[i, p] = s / <double>G
    finally:
        free(dist)
        free(order)
    return out


def weiszfeld(const double[:, ::1] X, Py_ssize_t steps, double nu):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], i, p, it
    z_arr = np.asarray(X).mean(axis=0)
    cdef double[::1] z = z_arr
    cdef double *w = <double *> malloc(n * sizeof(double))
    cdef double *acc = <double *> malloc(d * sizeof(double))
    cdef double s, diff, wsum
    try:
        with nogil:
            for it in range(steps):
                wsum = 0.0
                for i in range(n):
                    s = 0.0
                    for p in range(d):
                        diff = X[i, p] - z[p]
                        s = s + diff * diff
                    s = sqrt(s)
                    w[i] = 1.0 / (s if s > nu else nu)
                    wsum = wsum + w[i]
                for p in range(d):
                    acc[p] = 0.0
                for i in range(n):
                    for p in range(d):
                        acc[p] = acc[p] + w[i] * X[i, p]
                for p in range(d):
                    z[p] = acc[p] / wsum
    finally:
        free(w)
        free(acc)
    return z_arr
