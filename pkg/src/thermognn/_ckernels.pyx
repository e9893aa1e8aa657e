# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled edge/segment loops used by message passing and graph pooling.

Every function mirrors one in ``_pykernels`` and must agree with it to
rounding; accumulation runs over edges in index order.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

ctypedef cnp.float64_t f64
ctypedef cnp.int64_t i64


def spmm(const f64[:, :, ::1] z, const i64[::1] src, const i64[::1] dst,
         const f64[:, ::1] w, Py_ssize_t n_out):
    cdef Py_ssize_t n_edges = src.shape[0], heads = z.shape[1], feat = z.shape[2]
    out_arr = np.zeros((n_out, heads, feat), dtype=np.float64)
    cdef f64[:, :, ::1] out = out_arr
    cdef Py_ssize_t e, h, f, s, d
    cdef f64 c
    with nogil:
        for e in range(n_edges):
            s = src[e]
            d = dst[e]
            for h in range(heads):
                c = w[e, h]
                for f in range(feat):
                    out[d, h, f] += c * z[s, h, f]
    return out_arr


def edge_dot(const f64[:, :, ::1] a, const f64[:, :, ::1] b,
             const i64[::1] ia, const i64[::1] ib):
    cdef Py_ssize_t n_edges = ia.shape[0], heads = a.shape[1], feat = a.shape[2]
    out_arr = np.empty((n_edges, heads), dtype=np.float64)
    cdef f64[:, ::1] out = out_arr
    cdef Py_ssize_t e, h, f, i, j
    cdef f64 acc
    with nogil:
        for e in range(n_edges):
            i = ia[e]
            j = ib[e]
            for h in range(heads):
                acc = 0.0
                for f in range(feat):
                    acc += a[i, h, f] * b[j, h, f]
                out[e, h] = acc
    return out_arr


def segment_sum(const f64[:, ::1] vals, const i64[::1] seg, Py_ssize_t n_seg):
    cdef Py_ssize_t n = vals.shape[0], cols = vals.shape[1]
    out_arr = np.zeros((n_seg, cols), dtype=np.float64)
    cdef f64[:, ::1] out = out_arr
    cdef Py_ssize_t e, k, g
    with nogil:
        for e in range(n):
            g = seg[e]
            for k in range(cols):
                out[g, k] += vals[e, k]
    return out_arr


def segment_softmax(const f64[:, ::1] scores, const i64[::1] seg, Py_ssize_t n_seg):
    cdef Py_ssize_t n = scores.shape[0], heads = scores.shape[1]
    out_arr = np.empty((n, heads), dtype=np.float64)
    peak_arr = np.full((n_seg, heads), -np.inf, dtype=np.float64)
    total_arr = np.zeros((n_seg, heads), dtype=np.float64)
    cdef f64[:, ::1] out = out_arr
    cdef f64[:, ::1] peak = peak_arr
    cdef f64[:, ::1] total = total_arr
    cdef Py_ssize_t e, h, g
    cdef f64 v
    with nogil:
        for e in range(n):
            g = seg[e]
            for h in range(heads):
                if scores[e, h] > peak[g, h]:
                    peak[g, h] = scores[e, h]
        for e in range(n):
            g = seg[e]
            for h in range(heads):
                v = exp(scores[e, h] - peak[g, h])
                out[e, h] = v
                total[g, h] += v
        for e in range(n):
            g = seg[e]
            for h in range(heads):
                out[e, h] /= total[g, h]
    return out_arr


def segment_max(const f64[:, ::1] x, const i64[::1] seg, Py_ssize_t n_seg):
    cdef Py_ssize_t n = x.shape[0], cols = x.shape[1]
    best_arr = np.full((n_seg, cols), -np.inf, dtype=np.float64)
    arg_arr = np.full((n_seg, cols), -1, dtype=np.int64)
    cdef f64[:, ::1] best = best_arr
    cdef i64[:, ::1] arg = arg_arr
    cdef Py_ssize_t i, k, g
    with nogil:
        for i in range(n):
            g = seg[i]
            for k in range(cols):
                # strict comparison keeps the lowest row index on ties
                if arg[g, k] < 0 or x[i, k] > best[g, k]:
                    best[g, k] = x[i, k]
                    arg[g, k] = i
    return best_arr, arg_arr
