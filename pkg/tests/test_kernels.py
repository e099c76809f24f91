import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from focuspolicy import _kernels_py, kernels


def greedy_oracle(points, m, start):
    """Textbook max-min selection with plain Python distances."""
    pts = [tuple(p) for p in points]
    chosen = [start]
    while len(chosen) < m:
        best, best_d = None, -1.0
        for i, p in enumerate(pts):
            if i in chosen:
                continue
            d = min(math.dist(p, pts[j]) for j in chosen)
            if d > best_d:
                best, best_d = i, d
        chosen.append(best)
    return chosen


BACKENDS = [_kernels_py]
if kernels.BACKEND == "cython":
    from focuspolicy import _kernels

    BACKENDS.append(_kernels)


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.split(".")[-1])
def test_fps_matches_oracle_on_random_clouds(impl):
    gen = np.random.default_rng(0)
    for _ in range(1000):
        n = int(gen.integers(1, 9))
        d = int(gen.integers(2, 4))
        pts = gen.random((n, d))
        m = int(gen.integers(1, n + 1))
        start = int(gen.integers(0, n))
        got = list(impl.farthest_point_sample(np.ascontiguousarray(pts), m, start))
        assert got == greedy_oracle(pts, m, start)


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.split(".")[-1])
def test_fps_ties_and_duplicates_on_grid(impl):
    gen = np.random.default_rng(1)
    for _ in range(300):
        n = int(gen.integers(1, 9))
        pts = gen.integers(0, 3, (n, 2)).astype(float)
        m = int(gen.integers(1, n + 1))
        start = int(gen.integers(0, n))
        got = list(impl.farthest_point_sample(pts, m, start))
        assert got == greedy_oracle(pts, m, start)
        assert len(set(got)) == m


def test_fps_examples():
    square = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    assert list(kernels.farthest_point_sample(square, 2, 0)) == [0, 3]
    assert list(kernels.farthest_point_sample(square, 1, 2)) == [2]
    assert sorted(kernels.farthest_point_sample(square, 4, 1)) == [0, 1, 2, 3]
    with pytest.raises(ValueError):
        kernels.farthest_point_sample(square, 5, 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 40), st.integers(1, 6), st.integers(1, 5), st.integers(0, 2**31))
def test_segment_ops_agree_across_backends(n, nseg, width, seed):
    gen = np.random.default_rng(seed)
    vals = gen.standard_normal((n, width))
    seg = gen.integers(0, nseg, n)
    ref_sum = np.zeros((nseg, width))
    np.add.at(ref_sum, seg, vals)
    ref_max = np.full((nseg, width), -np.inf)
    np.maximum.at(ref_max, seg, vals)
    for impl in BACKENDS:
        np.testing.assert_allclose(impl.segment_sum(vals, seg, nseg), ref_sum, atol=1e-12)
        assert np.array_equal(impl.segment_max(vals, seg, nseg), ref_max)


def test_segment_sum_bad_id():
    with pytest.raises(IndexError):
        kernels.segment_sum(np.ones((2, 1)), np.array([0, 3]), 2)


def test_segment_sum_keeps_trailing_shape():
    out = kernels.segment_sum(np.ones((4, 2, 3)), np.array([0, 1, 1, 1]), 2)
    assert out.shape == (2, 2, 3)
    assert out[1, 0, 0] == 3.0
