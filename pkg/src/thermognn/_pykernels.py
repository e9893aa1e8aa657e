"""Numpy reference versions of the compiled kernels in ``_ckernels.pyx``."""
import numpy as np


def spmm(z, src, dst, w, n_out):
    out = np.zeros((n_out,) + z.shape[1:], dtype=np.float64)
    np.add.at(out, dst, w[:, :, None] * z[src])
    return out


def edge_dot(a, b, ia, ib):
    return np.einsum("ehf,ehf->eh", a[ia], b[ib])


def segment_sum(vals, seg, n_seg):
    out = np.zeros((n_seg, vals.shape[1]), dtype=np.float64)
    np.add.at(out, seg, vals)
    return out


def segment_softmax(scores, seg, n_seg):
    peak = np.full((n_seg, scores.shape[1]), -np.inf)
    np.maximum.at(peak, seg, scores)
    ex = np.exp(scores - peak[seg])
    return ex / segment_sum(ex, seg, n_seg)[seg]


def segment_max(x, seg, n_seg):
    n, cols = x.shape
    # sort by (segment, -value, row) so the first hit per segment is the
    # maximum with the lowest row index
    best = np.full((n_seg, cols), -np.inf)
    arg = np.full((n_seg, cols), -1, dtype=np.int64)
    rows = np.arange(n)
    for k in range(cols):
        order = np.lexsort((rows, -x[:, k], seg))
        s = seg[order]
        first = np.ones(n, dtype=bool)
        first[1:] = s[1:] != s[:-1]
        picked = order[first]
        best[seg[picked], k] = x[picked, k]
        arg[seg[picked], k] = picked
    return best, arg
