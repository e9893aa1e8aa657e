"""Both kernel backends must agree; the numpy one is also checked by hand."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermognn import _pykernels, kernels
from thermognn.linalg import RngStream

BACKENDS = kernels.available_backends()


def random_edges(s, n, e):
    g = s.generator
    return g.integers(0, n, e), g.integers(0, n, e)


def test_compiled_backend_is_built():
    assert "cython" in BACKENDS, "Cython extension missing; rebuild with pip install -e ."


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_spmm_matches_loop(name):
    s = RngStream(1)
    z = s.normal(7, 6).reshape(7, 2, 3)
    src, dst = random_edges(s, 7, 15)
    w = s.normal(15, 2)
    out = kernels.spmm(z, src, dst, w, 7, impl=BACKENDS[name])
    ref = np.zeros_like(z)
    for e in range(15):
        ref[dst[e]] += w[e][:, None] * z[src[e]]
    np.testing.assert_allclose(out, ref, rtol=0, atol=1e-13)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_segment_softmax_sums_to_one(name):
    s = RngStream(2)
    seg = np.array([0, 0, 1, 2, 2, 2])
    scores = s.normal(6, 2) * 50
    a = kernels.segment_softmax(scores, seg, 3, impl=BACKENDS[name])
    np.testing.assert_allclose(kernels.segment_sum(a, seg, 3, impl=BACKENDS[name]), 1.0, atol=1e-12)
    np.testing.assert_allclose(a[2], [1.0, 1.0])


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_segment_max_ties_lowest_index(name):
    x = np.array([[1.0, 5.0], [3.0, 5.0], [3.0, 2.0], [0.0, 0.0]])
    seg = np.array([0, 0, 0, 1])
    best, arg = kernels.segment_max(x, seg, 2, impl=BACKENDS[name])
    np.testing.assert_array_equal(best, [[3.0, 5.0], [0.0, 0.0]])
    np.testing.assert_array_equal(arg, [[1, 0], [3, 3]])


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_edge_dot(name):
    s = RngStream(3)
    a, b = s.normal(4, 6).reshape(4, 2, 3), s.normal(5, 6).reshape(5, 2, 3)
    ia, ib = np.array([0, 3, 3]), np.array([4, 0, 2])
    r = kernels.edge_dot(a, b, ia, ib, impl=BACKENDS[name])
    for e in range(3):
        for h in range(2):
            assert r[e, h] == pytest.approx(a[ia[e], h] @ b[ib[e], h], abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 9), st.integers(1, 30), st.integers(1, 3))
def test_backends_agree(seed, n, e, heads):
    if "cython" not in BACKENDS:
        return
    c, p = BACKENDS["cython"], _pykernels
    s = RngStream(seed)
    src, dst = random_edges(s, n, e)
    z = s.normal(n, heads * 2).reshape(n, heads, 2)
    w = s.normal(e, heads)
    np.testing.assert_allclose(kernels.spmm(z, src, dst, w, n, c), kernels.spmm(z, src, dst, w, n, p),
                               atol=1e-12)
    np.testing.assert_allclose(kernels.segment_softmax(w, dst, n, c),
                               kernels.segment_softmax(w, dst, n, p), atol=1e-14)
    x = np.round(s.normal(n, 3), 1)  # coarse values force ties
    seg = np.sort(s.generator.integers(0, 2, n))
    seg[0] = 0
    n_seg = int(seg.max()) + 1
    bc, ac = kernels.segment_max(x, seg, n_seg, c)
    bp, ap = kernels.segment_max(x, seg, n_seg, p)
    np.testing.assert_array_equal(bc, bp)
    np.testing.assert_array_equal(ac, ap)
