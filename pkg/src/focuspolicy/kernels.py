"""Hot kernels, compiled when available.

The Cython extension ``_kernels`` is preferred. Setting the environment variable
``FOCUSPOLICY_PURE_PYTHON=1`` (or failing to build the extension) selects the
NumPy fallback in ``_kernels_py``. ``BACKEND`` records which one was loaded.
"""

import os

import numpy as np

from . import _kernels_py

if os.environ.get("FOCUSPOLICY_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"


def farthest_point_sample(points, m, start=0):
    """Greedy max-min subset of ``points`` (n x d), beginning at ``start``.

    Ties go to the lowest index; returned indices are unique and in selection order.
    """
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError("points must be an n x d array")
    return _impl.farthest_point_sample(pts, int(m), int(start))


def segment_sum(values, seg, num_segments):
    """Row-wise scatter-add: ``out[seg[i]] += values[i]``."""
    v = np.ascontiguousarray(values, dtype=np.float64)
    flat = v.reshape(v.shape[0], -1)
    out = _impl.segment_sum(flat, np.ascontiguousarray(seg, dtype=np.int64), int(num_segments))
    return out.reshape((num_segments,) + v.shape[1:])


def segment_max(values, seg, num_segments):
    """Row-wise scatter-max; segments with no rows are ``-inf``."""
    v = np.ascontiguousarray(values, dtype=np.float64)
    flat = v.reshape(v.shape[0], -1)
    out = _impl.segment_max(flat, np.ascontiguousarray(seg, dtype=np.int64), int(num_segments))
    return out.reshape((num_segments,) + v.shape[1:])
