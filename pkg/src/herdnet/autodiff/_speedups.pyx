# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled temporal-convolution kernels.

Same contracts as kernels_numpy: batched padded input (b, c, wp), kernel
(o, c, 3), plain C loops with a fixed accumulation order so results are
deterministic run to run.
"""

import numpy as np


def conv1x3_fwd(double[:, :, ::1] xp, double[:, :, ::1] w, int stride):
    cdef Py_ssize_t b = xp.shape[0]
    cdef Py_ssize_t c = xp.shape[1]
    cdef Py_ssize_t wp = xp.shape[2]
    cdef Py_ssize_t o = w.shape[0]
    cdef Py_ssize_t wout = (wp - 3) // stride + 1
    y_arr = np.zeros((b, o, wout), dtype=np.float64)
    cdef double[:, :, ::1] y = y_arr
    cdef Py_ssize_t i, j, ci, t, base
    cdef double acc
    for i in range(b):
        for j in range(o):
            for t in range(wout):
                base = t * stride
                acc = 0.0
                for ci in range(c):
                    acc += (xp[i, ci, base] * w[j, ci, 0]
                            + xp[i, ci, base + 1] * w[j, ci, 1]
                            + xp[i, ci, base + 2] * w[j, ci, 2])
                y[i, j, t] = acc
    return y_arr


def conv1x3_bwd_input(double[:, :, ::1] gy, double[:, :, ::1] w, int stride, Py_ssize_t wp):
    cdef Py_ssize_t b = gy.shape[0]
    cdef Py_ssize_t o = gy.shape[1]
    cdef Py_ssize_t wout = gy.shape[2]
    cdef Py_ssize_t c = w.shape[1]
    gx_arr = np.zeros((b, c, wp), dtype=np.float64)
    cdef double[:, :, ::1] gx = gx_arr
    cdef Py_ssize_t i, j, ci, t, base
    cdef double g
    for i in range(b):
        for j in range(o):
            for t in range(wout):
                g = gy[i, j, t]
                base = t * stride
                for ci in range(c):
                    gx[i, ci, base] += g * w[j, ci, 0]
                    gx[i, ci, base + 1] += g * w[j, ci, 1]
                    gx[i, ci, base + 2] += g * w[j, ci, 2]
    return gx_arr


def conv1x3_bwd_weight(double[:, :, ::1] gy, double[:, :, ::1] xp, int stride):
    cdef Py_ssize_t b = gy.shape[0]
    cdef Py_ssize_t o = gy.shape[1]
    cdef Py_ssize_t wout = gy.shape[2]
    cdef Py_ssize_t c = xp.shape[1]
    gw_arr = np.zeros((o, c, 3), dtype=np.float64)
    cdef double[:, :, ::1] gw = gw_arr
    cdef Py_ssize_t i, j, ci, t, base
    cdef double g
    for i in range(b):
        for j in range(o):
            for t in range(wout):
                g = gy[i, j, t]
                base = t * stride
                for ci in range(c):
                    gw[j, ci, 0] += g * xp[i, ci, base]
                    gw[j, ci, 1] += g * xp[i, ci, base + 1]
                    gw[j, ci, 2] += g * xp[i, ci, base + 2]
    return gw_arr
