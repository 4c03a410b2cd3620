# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled box-arithmetic kernels; the hot loops behind relscore.geometry.

Mirrors ``_boxops_py`` exactly (same operation order, so results agree
bit for bit with the pure-Python fallback).
"""

from libc.math cimport sqrt

import numpy as np

BACKEND = "cython"


cdef inline double _fmin(double a, double b) nogil:
    return a if a < b else b


cdef inline double _fmax(double a, double b) nogil:
    return a if a > b else b


cdef inline double _iou(double ax, double ay, double aw, double ah,
                        double bx, double by, double bw, double bh) nogil:
    cdef double iw = _fmin(ax + aw, bx + bw) - _fmax(ax, bx)
    cdef double ih = _fmin(ay + ah, by + bh) - _fmax(ay, by)
    cdef double inter, union_
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union_ = aw * ah + bw * bh - inter
    return inter / union_


cpdef double iou_xywh(double ax, double ay, double aw, double ah,
                      double bx, double by, double bw, double bh):
    return _iou(ax, ay, aw, ah, bx, by, bw, bh)


cpdef tuple union_xywh(double ax, double ay, double aw, double ah,
                       double bx, double by, double bw, double bh):
    cdef double x1 = _fmin(ax, bx)
    cdef double y1 = _fmin(ay, by)
    cdef double x2 = _fmax(ax + aw, bx + bw)
    cdef double y2 = _fmax(ay + ah, by + bh)
    return (x1, y1, x2 - x1, y2 - y1)


cpdef tuple expand_clamp_xywh(double x, double y, double w, double h,
                              double fraction, double img_w, double img_h):
    cdef double half_w = fraction * w * 0.5
    cdef double half_h = fraction * h * 0.5
    cdef double x1 = _fmax(x - half_w, 0.0)
    cdef double y1 = _fmax(y - half_h, 0.0)
    cdef double x2 = _fmin(x + w + half_w, img_w)
    cdef double y2 = _fmin(y + h + half_h, img_h)
    return (x1, y1, x2 - x1, y2 - y1)


cpdef double size_ratio_xywh(double aw, double ah, double bw, double bh):
    cdef double area_a = aw * ah
    cdef double area_b = bw * bh
    return _fmin(area_a, area_b) / _fmax(area_a, area_b)


cpdef double separation_xywh(double ax, double ay, double aw, double ah,
                             double bx, double by, double bw, double bh,
                             double img_w, double img_h):
    cdef double dx = _fmax(0.0, _fmax(ax - (bx + bw), bx - (ax + aw)))
    cdef double dy = _fmax(0.0, _fmax(ay - (by + bh), by - (ay + ah)))
    if dx == 0.0 and dy == 0.0:
        return 0.0
    return sqrt(dx * dx + dy * dy) / _fmax(img_w, img_h)


def pairwise_iou(boxes):
    """IoU of every box against every other; (n, n) symmetric matrix."""
    cdef double[:, ::1] b = np.ascontiguousarray(boxes, dtype=np.float64)
    cdef Py_ssize_t n = b.shape[0]
    out_arr = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double v
    with nogil:
        for i in range(n):
            out[i, i] = _iou(b[i, 0], b[i, 1], b[i, 2], b[i, 3],
                             b[i, 0], b[i, 1], b[i, 2], b[i, 3])
            for j in range(i + 1, n):
                v = _iou(b[i, 0], b[i, 1], b[i, 2], b[i, 3],
                         b[j, 0], b[j, 1], b[j, 2], b[j, 3])
                out[i, j] = v
                out[j, i] = v
    return out_arr


def iou_matrix(a, b):
    """IoU of every box in ``a`` (n, 4) against every box in ``b`` (m, 4)."""
    cdef double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[:, ::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = av.shape[0]
    cdef Py_ssize_t m = bv.shape[0]
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n):
            for j in range(m):
                out[i, j] = _iou(av[i, 0], av[i, 1], av[i, 2], av[i, 3],
                                 bv[j, 0], bv[j, 1], bv[j, 2], bv[j, 3])
    return out_arr
