# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels.  Same contracts as :mod:`crashbench._kernels_py`."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


cdef void _axis(Py_ssize_t n_in, Py_ssize_t n_out, cnp.intp_t[:] lo,
                cnp.intp_t[:] hi, double[:] frac) noexcept nogil:
    cdef double scale = <double>n_in / <double>n_out
    cdef double pos
    cdef Py_ssize_t i, k
    for i in range(n_out):
        pos = (<double>i + 0.5) * scale - 0.5
        if pos < 0.0:
            pos = 0.0
        if pos > <double>(n_in - 1):
            pos = <double>(n_in - 1)
        k = <Py_ssize_t>floor(pos)
        lo[i] = k
        hi[i] = k + 1 if k + 1 < n_in else n_in - 1
        frac[i] = pos - <double>k


def resize_bilinear(src, Py_ssize_t out_h, Py_ssize_t out_w):
    cdef double[:, :, ::1] s = np.ascontiguousarray(src, dtype=np.float64)
    cdef Py_ssize_t h = s.shape[0], w = s.shape[1], nc = s.shape[2]
    out = np.empty((out_h, out_w, nc), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    cdef cnp.intp_t[:] y0 = np.empty(out_h, dtype=np.intp)
    cdef cnp.intp_t[:] y1 = np.empty(out_h, dtype=np.intp)
    cdef cnp.intp_t[:] x0 = np.empty(out_w, dtype=np.intp)
    cdef cnp.intp_t[:] x1 = np.empty(out_w, dtype=np.intp)
    cdef double[:] fy = np.empty(out_h, dtype=np.float64)
    cdef double[:] fx = np.empty(out_w, dtype=np.float64)
    cdef Py_ssize_t i, j, ch
    cdef double a, b, c, d, top, bot
    with nogil:
        _axis(h, out_h, y0, y1, fy)
        _axis(w, out_w, x0, x1, fx)
        for i in range(out_h):
            for j in range(out_w):
                for ch in range(nc):
                    a = s[y0[i], x0[j], ch]
                    b = s[y0[i], x1[j], ch]
                    c = s[y1[i], x0[j], ch]
                    d = s[y1[i], x1[j], ch]
                    top = a + fx[j] * (b - a)
                    bot = c + fx[j] * (d - c)
                    o[i, j, ch] = top + fy[i] * (bot - top)
    return out


def ranked_ap(scores, labels):
    cdef double[::1] sc = np.ascontiguousarray(scores, dtype=np.float64)
    cdef cnp.int8_t[::1] lab = np.ascontiguousarray(np.asarray(labels) != 0, dtype=np.int8)
    cdef cnp.intp_t[::1] order = np.argsort(-np.asarray(sc), kind="mergesort").astype(np.intp)
    cdef Py_ssize_t n = sc.shape[0], i = 0, j
    cdef long tp = 0, gained, n_pos = 0
    cdef double total = 0.0, cur
    for j in range(n):
        n_pos += lab[j]
    while i < n:
        cur = sc[order[i]]
        gained = 0
        j = i
        while j < n and sc[order[j]] == cur:
            gained += lab[order[j]]
            j += 1
        tp += gained
        if gained:
            total += gained * (<double>tp / <double>j)
        i = j
    return total / n_pos


def ranked_auc(scores, labels):
    cdef double[::1] sc = np.ascontiguousarray(scores, dtype=np.float64)
    cdef cnp.int8_t[::1] lab = np.ascontiguousarray(np.asarray(labels) != 0, dtype=np.int8)
    cdef cnp.intp_t[::1] order = np.argsort(np.asarray(sc), kind="mergesort").astype(np.intp)
    cdef Py_ssize_t n = sc.shape[0], i = 0, j, k
    cdef long n_pos = 0, pos_in_group
    cdef double rank_sum = 0.0, cur, mid
    for k in range(n):
        n_pos += lab[k]
    while i < n:
        cur = sc[order[i]]
        j = i
        pos_in_group = 0
        while j < n and sc[order[j]] == cur:
            pos_in_group += lab[order[j]]
            j += 1
        mid = (<double>(i + j + 1)) / 2.0
        rank_sum += pos_in_group * mid
        i = j
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (<double>n_pos * <double>(n - n_pos))
