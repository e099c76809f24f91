"""NumPy implementations of the compiled kernels in ``_kernels.pyx``.

Used when the extension is not built, or when ``FOCUSPOLICY_PURE_PYTHON`` is set.
Results match the compiled versions exactly.
"""

import numpy as np
from scipy import sparse


def farthest_point_sample(points, m, start):
    points = np.ascontiguousarray(points, dtype=np.float64)
    n = points.shape[0]
    if m < 1 or m > n:
        raise ValueError(f"cannot select {m} points from a cloud of {n}")
    if start < 0 or start >= n:
        raise ValueError(f"start index {start} out of range for {n} points")
    sel = np.empty(m, dtype=np.int64)
    sel[0] = start
    mind = np.full(n, np.inf)
    mind[start] = -1.0
    last = start
    for k in range(1, m):
        diff = points - points[last]
        dist = np.einsum("ij,ij->i", diff, diff)
        live = mind >= 0.0
        np.minimum(mind, dist, out=mind, where=live)
        best = int(np.argmax(mind))  # first maximum wins
        sel[k] = best
        mind[best] = -1.0
        last = best
    return sel


def _check_seg(seg, num_segments):
    if seg.size and (seg.min() < 0 or seg.max() >= num_segments):
        raise IndexError("segment id out of range")


def segment_sum(values, seg, num_segments):
    _check_seg(seg, num_segments)
    e = values.shape[0]
    op = sparse.csr_matrix((np.ones(e), (seg, np.arange(e))), shape=(num_segments, e))
    return np.asarray(op @ values)


def segment_max(values, seg, num_segments):
    _check_seg(seg, num_segments)
    out = np.full((num_segments, values.shape[1]), -np.inf)
    np.maximum.at(out, seg, values)
    return out
