# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: farthest point sampling and segment reductions."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def farthest_point_sample(const double[:, ::1] points, Py_ssize_t m, Py_ssize_t start):
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    if m < 1 or m > n:
        raise ValueError(f"cannot select {m} points from a cloud of {n}")
    if start < 0 or start >= n:
        raise ValueError(f"start index {start} out of range for {n} points")
    out = np.empty(m, dtype=np.int64)
    cdef cnp.int64_t[::1] sel = out
    mind_arr = np.full(n, INFINITY)
    cdef double[::1] mind = mind_arr
    cdef Py_ssize_t i, j, k, last = start, best
    cdef double dist, diff, best_d
    sel[0] = start
    mind[start] = -1.0
    for k in range(1, m):
        best = -1
        best_d = -1.0
        for i in range(n):
            if mind[i] < 0.0:
                continue
            dist = 0.0
            for j in range(d):
                diff = points[i, j] - points[last, j]
                dist += diff * diff
            if dist < mind[i]:
                mind[i] = dist
            if mind[i] > best_d:
                best_d = mind[i]
                best = i
        sel[k] = best
        mind[best] = -1.0
        last = best
    return out


def segment_sum(const double[:, ::1] values, const cnp.int64_t[::1] seg, Py_ssize_t num_segments):
    cdef Py_ssize_t e = values.shape[0]
    cdef Py_ssize_t d = values.shape[1]
    out_arr = np.zeros((num_segments, d))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, s
    for i in range(e):
        s = seg[i]
        if s < 0 or s >= num_segments:
            raise IndexError(f"segment id {s} out of range")
        for j in range(d):
            out[s, j] += values[i, j]
    return out_arr


def segment_max(const double[:, ::1] values, const cnp.int64_t[::1] seg, Py_ssize_t num_segments):
    cdef Py_ssize_t e = values.shape[0]
    cdef Py_ssize_t d = values.shape[1]
    out_arr = np.full((num_segments, d), -INFINITY)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, s
    for i in range(e):
        s = seg[i]
        if s < 0 or s >= num_segments:
            raise IndexError(f"segment id {s} out of range")
        for j in range(d):
            if values[i, j] > out[s, j]:
                out[s, j] = values[i, j]
    return out_arr
