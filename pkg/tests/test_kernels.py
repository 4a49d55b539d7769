import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gnnspace import kernels
from gnnspace.graph import generate_scale_free, generate_small_world

MODULES = kernels.available_backends()
BACKENDS = list(MODULES)


def test_python_backend_always_available():
    assert "python" in BACKENDS
    assert kernels.BACKEND in ("python", "cython")


@pytest.mark.parametrize("impl", BACKENDS)
def test_segment_sum_matches_onehot_matmul(impl, rng):
    values = rng.normal(size=(50, 4))
    seg = rng.integers(0, 7, size=50)
    onehot = np.zeros((7, 50))
    onehot[seg, np.arange(50)] = 1.0
    np.testing.assert_allclose(kernels.segment_sum(values, seg, 7, impl=MODULES[impl]), onehot @ values, atol=1e-12)


@pytest.mark.parametrize("impl", BACKENDS)
def test_segment_max_empty_segment_and_first_argmax(impl):
    values = np.array([[1.0, 5.0], [3.0, 5.0], [3.0, -1.0]])
    seg = np.array([0, 0, 0])
    out, arg = kernels.segment_max(values, seg, 2, impl=MODULES[impl])
    np.testing.assert_array_equal(out, [[3.0, 5.0], [0.0, 0.0]])
    np.testing.assert_array_equal(arg, [[1, 0], [-1, -1]])


@given(st.integers(0, 2**32 - 1), st.integers(1, 40), st.integers(1, 6))
def test_backends_agree_on_segments(seed, n, k):
    r = np.random.default_rng(seed)
    values = r.integers(-3, 4, size=(n, 3)).astype(float)
    seg = r.integers(0, k, size=n)
    ref = [kernels.segment_sum(values, seg, k, impl=MODULES[b]) for b in BACKENDS]
    mx = [kernels.segment_max(values, seg, k, impl=MODULES[b]) for b in BACKENDS]
    for a in ref[1:]:
        np.testing.assert_array_equal(a, ref[0])
    for out, arg in mx[1:]:
        np.testing.assert_array_equal(out, mx[0][0])
        np.testing.assert_array_equal(arg, mx[0][1])


@given(st.integers(0, 10_000))
def test_backends_agree_on_graph_kernels(seed):
    g = generate_small_world(20, 4, 0.3, seed) if seed % 2 else generate_scale_free(20, 2, 0.5, seed)
    indptr, indices = g.csr
    bfs = {b: kernels.bfs_distance_sum(indptr, indices, g.n, impl=MODULES[b]) for b in BACKENDS}
    tri = {b: kernels.triangle_counts(indptr, indices, g.n, impl=MODULES[b]) for b in BACKENDS}
    for b in BACKENDS:
        assert tuple(bfs[b]) == tuple(bfs["python"])
        np.testing.assert_array_equal(tri[b], tri["python"])


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=2, max_size=15))
def test_backends_agree_on_pair_counts(pairs):
    x = np.array([p[0] for p in pairs], dtype=float)
    y = np.array([p[1] for p in pairs], dtype=float)
    counts = {b: tuple(kernels.pair_counts(x, y, impl=MODULES[b])) for b in BACKENDS}
    n = len(x)
    brute = [0, 0, 0, 0]
    for i in range(n):
        for j in range(i + 1, n):
            sx, sy = np.sign(x[i] - x[j]), np.sign(y[i] - y[j])
            if sx == 0 and sy == 0:
                continue
            if sx == 0:
                brute[2] += 1
            elif sy == 0:
                brute[3] += 1
            elif sx == sy:
                brute[0] += 1
            else:
                brute[1] += 1
    for b in BACKENDS:
        assert counts[b] == tuple(brute)
