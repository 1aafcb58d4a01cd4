# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: n-gram scanning, sparse Gram blocks, and the
water-filling projection. Mirrors ssad._core_py exactly."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

IMPL = "compiled"


def ngram_codes(bytes data, int n):
    """Distinct n-grams of ``data`` as sorted uint64 codes plus counts."""
    cdef Py_ssize_t t = len(data)
    if t < n:
        return np.empty(0, dtype=np.uint64), np.empty(0, dtype=np.float64)
    cdef const unsigned char[:] raw = data
    cdef Py_ssize_t total = t - n + 1
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] codes = np.empty(total, dtype=np.uint64)
    cdef unsigned long long code = 0
    cdef unsigned long long mask
    cdef Py_ssize_t i, k
    if n == 8:
        mask = <unsigned long long>0xFFFFFFFFFFFFFFFF
    else:
        mask = (<unsigned long long>1 << (8 * n)) - 1
    for k in range(n):
        code = (code << 8) | raw[k]
    codes[0] = code
    for i in range(1, total):
        code = ((code << 8) | raw[i + n - 1]) & mask
        codes[i] = code
    keys, counts = np.unique(codes, return_counts=True)
    return keys, counts.astype(np.float64)


def merge_dot(ka_obj, wa_obj, kb_obj, wb_obj):
    """Dot product of two sorted sparse vectors by index merging."""
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] ka = np.ascontiguousarray(ka_obj, dtype=np.uint64)
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] kb = np.ascontiguousarray(kb_obj, dtype=np.uint64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wa = np.ascontiguousarray(wa_obj, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wb = np.ascontiguousarray(wb_obj, dtype=np.float64)
    return _merge_dot_raw(&ka[0] if ka.shape[0] else NULL, &wa[0] if wa.shape[0] else NULL, ka.shape[0],
                          &kb[0] if kb.shape[0] else NULL, &wb[0] if wb.shape[0] else NULL, kb.shape[0])


cdef double _merge_dot_raw(const cnp.uint64_t* ka, const double* wa, Py_ssize_t na,
                           const cnp.uint64_t* kb, const double* wb, Py_ssize_t nb) nogil:
    cdef Py_ssize_t i = 0, j = 0
    cdef double acc = 0.0
    while i < na and j < nb:
        if ka[i] == kb[j]:
            acc += wa[i] * wb[j]
            i += 1
            j += 1
        elif ka[i] < kb[j]:
            i += 1
        else:
            j += 1
    return acc


def gram_sparse(indptr_obj, keys_obj, weights_obj):
    """Dense symmetric Gram matrix of stacked sparse vectors."""
    cdef cnp.ndarray[cnp.int64_t, ndim=1] indptr = np.ascontiguousarray(indptr_obj, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] keys = np.ascontiguousarray(keys_obj, dtype=np.uint64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] weights = np.ascontiguousarray(weights_obj, dtype=np.float64)
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, n), dtype=np.float64)
    cdef Py_ssize_t i, j
    cdef cnp.int64_t si, ei, sj, ej
    cdef double v
    with nogil:
        for i in range(n):
            si = indptr[i]
            ei = indptr[i + 1]
            for j in range(i, n):
                sj = indptr[j]
                ej = indptr[j + 1]
                v = _merge_dot_raw(&keys[si] if ei > si else NULL, &weights[si] if ei > si else NULL, ei - si,
                                   &keys[sj] if ej > sj else NULL, &weights[sj] if ej > sj else NULL, ej - sj)
                out[i, j] = v
                out[j, i] = v
    return out


def cross_gram_sparse(indptr_a_obj, keys_a_obj, wa_obj, indptr_b_obj, keys_b_obj, wb_obj):
    """Rectangular Gram block between two stacked sparse collections."""
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ipa = np.ascontiguousarray(indptr_a_obj, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ipb = np.ascontiguousarray(indptr_b_obj, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] ka = np.ascontiguousarray(keys_a_obj, dtype=np.uint64)
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] kb = np.ascontiguousarray(keys_b_obj, dtype=np.uint64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wa = np.ascontiguousarray(wa_obj, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wb = np.ascontiguousarray(wb_obj, dtype=np.float64)
    cdef Py_ssize_t na = ipa.shape[0] - 1
    cdef Py_ssize_t nb = ipb.shape[0] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((na, nb), dtype=np.float64)
    cdef Py_ssize_t i, j
    cdef cnp.int64_t si, ei, sj, ej
    with nogil:
        for i in range(na):
            si = ipa[i]
            ei = ipa[i + 1]
            for j in range(nb):
                sj = ipb[j]
                ej = ipb[j + 1]
                out[i, j] = _merge_dot_raw(&ka[si] if ei > si else NULL, &wa[si] if ei > si else NULL, ei - si,
                                           &kb[sj] if ej > sj else NULL, &wb[sj] if ej > sj else NULL, ej - sj)
    return out


def project_hyperplane_box(v_obj, sign_obj, lo_obj, hi_obj, double c):
    """Euclidean projection onto {x : sign.x = c, lo <= x <= hi}."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] v = np.ascontiguousarray(v_obj, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sign = np.ascontiguousarray(sign_obj, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] lo = np.ascontiguousarray(
        np.broadcast_to(np.asarray(lo_obj, dtype=np.float64), (n,)))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] hi = np.ascontiguousarray(
        np.broadcast_to(np.asarray(hi_obj, dtype=np.float64), (n,)))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] u = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] seg_lo = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] seg_hi = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t i
    for i in range(n):
        u[i] = sign[i] * v[i]
        if sign[i] > 0:
            seg_lo[i] = u[i] - hi[i]
            seg_hi[i] = u[i] - lo[i]
        else:
            seg_lo[i] = u[i] + lo[i]
            seg_hi[i] = u[i] + hi[i]
    cdef double g_max = 0.0, g_min = 0.0
    for i in range(n):
        g_max += u[i] - seg_lo[i]
        g_min += u[i] - seg_hi[i]
    g_max -= c
    g_min -= c
    if g_max < -1e-9 or g_min > 1e-9:
        raise ValueError("projection target set is empty")
    cdef double lam
    cdef cnp.ndarray[cnp.float64_t, ndim=1] bps
    cdef Py_ssize_t a, b, m
    cdef double ga, gb
    if g_max <= 0.0:
        lam = np.min(seg_lo)
    elif g_min >= 0.0:
        lam = np.max(seg_hi)
    else:
        bps = np.sort(np.concatenate([seg_lo, seg_hi]))
        a = 0
        b = bps.shape[0] - 1
        while b - a > 1:
            m = (a + b) // 2
            if _g_eval(&u[0], &seg_lo[0], &seg_hi[0], n, bps[m], c) > 0.0:
                a = m
            else:
                b = m
        ga = _g_eval(&u[0], &seg_lo[0], &seg_hi[0], n, bps[a], c)
        gb = _g_eval(&u[0], &seg_lo[0], &seg_hi[0], n, bps[b], c)
        if gb == ga:
            lam = bps[b]
        else:
            lam = bps[a] + (bps[b] - bps[a]) * ga / (ga - gb)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x = np.empty(n, dtype=np.float64)
    cdef double xi
    for i in range(n):
        xi = u[i] - lam
        if xi < u[i] - seg_hi[i]:
            xi = u[i] - seg_hi[i]
        if xi > u[i] - seg_lo[i]:
            xi = u[i] - seg_lo[i]
        xi *= sign[i]
        if xi < lo[i]:
            xi = lo[i]
        if xi > hi[i]:
            xi = hi[i]
        x[i] = xi
    return x


cdef double _g_eval(const double* u, const double* seg_lo, const double* seg_hi,
                    Py_ssize_t n, double lam, double c) nogil:
    cdef Py_ssize_t i
    cdef double acc = 0.0, t
    for i in range(n):
        t = u[i] - lam
        if t < u[i] - seg_hi[i]:
            t = u[i] - seg_hi[i]
        if t > u[i] - seg_lo[i]:
            t = u[i] - seg_lo[i]
        acc += t
    return acc - c
