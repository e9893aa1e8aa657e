"""Backend selection for the edge/segment kernels.

The compiled module is used when it imports; set ``THERMOGNN_PURE=1`` to
force the numpy implementation. All inputs are normalized here (contiguous
float64 / int64) so both backends see identical arrays.
"""
import os

import numpy as np

from . import _pykernels

if os.environ.get("THERMOGNN_PURE"):
    _impl = _pykernels
    BACKEND = "numpy"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "numpy"


def _f(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _i(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def spmm(z, src, dst, w, n_out, impl=None):
    """Edge-weighted scatter: ``out[dst[e], h] += w[e, h] * z[src[e], h]``.

    ``z`` is (N, heads, F), ``w`` is (E, heads); returns (n_out, heads, F).
    """
    return (impl or _impl).spmm(_f(z), _i(src), _i(dst), _f(w), int(n_out))


def edge_dot(a, b, ia, ib, impl=None):
    """Per-edge, per-head dot product ``a[ia[e], h] . b[ib[e], h]``."""
    return (impl or _impl).edge_dot(_f(a), _f(b), _i(ia), _i(ib))


def segment_sum(vals, seg, n_seg, impl=None):
    return (impl or _impl).segment_sum(_f(vals), _i(seg), int(n_seg))


def segment_softmax(scores, seg, n_seg, impl=None):
    """Softmax of ``scores`` (E, heads) within each segment, max-shifted."""
    return (impl or _impl).segment_softmax(_f(scores), _i(seg), int(n_seg))


def segment_max(x, seg, n_seg, impl=None):
    """Column-wise max of rows per segment and the (lowest) argmax row."""
    return (impl or _impl).segment_max(_f(x), _i(seg), int(n_seg))


def available_backends():
    out = {"numpy": _pykernels}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
