# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled grouped 2-D cross-correlation kernels (stride 1, zero padding).

Same contracts as the numpy fallback: float64 C-contiguous arrays, shape
checking done by the caller.
"""

import numpy as np

BACKEND = "native"


def conv2d_forward(double[:, :, :, ::1] x, double[:, :, :, ::1] w, bias,
                   Py_ssize_t groups, Py_ssize_t padding):
    cdef Py_ssize_t n = x.shape[0], cin = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t cout = w.shape[0], cg = w.shape[1], k = w.shape[2]
    cdef Py_ssize_t out_h = h + 2 * padding - k + 1
    cdef Py_ssize_t out_w = wd + 2 * padding - k + 1
    cdef Py_ssize_t og = cout // groups

    bias_arr = np.zeros(cout, dtype=np.float64) if bias is None \
        else np.ascontiguousarray(bias, dtype=np.float64)
    cdef double[::1] bv = bias_arr
    out_arr = np.empty((n, cout, out_h, out_w), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr

    cdef Py_ssize_t b, o, base, c, i, j, ki, kj, yy, xx
    cdef double acc
    with nogil:
        for b in range(n):
            for o in range(cout):
                base = (o // og) * cg
                for i in range(out_h):
                    for j in range(out_w):
                        acc = bv[o]
                        for c in range(cg):
                            for ki in range(k):
                                yy = i + ki - padding
                                if yy < 0 or yy >= h:
                                    continue
                                for kj in range(k):
                                    xx = j + kj - padding
                                    if xx < 0 or xx >= wd:
                                        continue
                                    acc += x[b, base + c, yy, xx] * w[o, c, ki, kj]
                        out[b, o, i, j] = acc
    return out_arr


def conv2d_backward_input(double[:, :, :, ::1] gout, double[:, :, :, ::1] w,
                          Py_ssize_t groups, Py_ssize_t padding,
                          Py_ssize_t in_h, Py_ssize_t in_w):
    cdef Py_ssize_t n = gout.shape[0], cout = gout.shape[1]
    cdef Py_ssize_t out_h = gout.shape[2], out_w = gout.shape[3]
    cdef Py_ssize_t cg = w.shape[1], k = w.shape[2]
    cdef Py_ssize_t cin = cg * groups
    cdef Py_ssize_t og = cout // groups

    gx_arr = np.zeros((n, cin, in_h, in_w), dtype=np.float64)
    cdef double[:, :, :, ::1] gx = gx_arr

    cdef Py_ssize_t b, c, g, o, y, x, ki, kj, oy, ox
    cdef double acc
    with nogil:
        for b in range(n):
            for c in range(cin):
                g = c // cg
                for y in range(in_h):
                    for x in range(in_w):
                        acc = 0.0
                        for o in range(g * og, (g + 1) * og):
                            for ki in range(k):
                                oy = y + padding - ki
                                if oy < 0 or oy >= out_h:
                                    continue
                                for kj in range(k):
                                    ox = x + padding - kj
                                    if ox < 0 or ox >= out_w:
                                        continue
                                    acc += gout[b, o, oy, ox] * w[o, c - g * cg, ki, kj]
                        gx[b, c, y, x] = acc
    return gx_arr


def conv2d_backward_weight(double[:, :, :, ::1] x, double[:, :, :, ::1] gout,
                           Py_ssize_t groups, Py_ssize_t padding, Py_ssize_t ksize):
    cdef Py_ssize_t n = x.shape[0], cin = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t cout = gout.shape[1]
    cdef Py_ssize_t out_h = gout.shape[2], out_w = gout.shape[3]
    cdef Py_ssize_t cg = cin // groups
    cdef Py_ssize_t og = cout // groups

    gw_arr = np.zeros((cout, cg, ksize, ksize), dtype=np.float64)
    cdef double[:, :, :, ::1] gw = gw_arr

    cdef Py_ssize_t b, o, base, c, ki, kj, i, j, yy, xx
    cdef double acc
    with nogil:
        for o in range(cout):
            base = (o // og) * cg
            for c in range(cg):
                for ki in range(ksize):
                    for kj in range(ksize):
                        acc = 0.0
                        for b in range(n):
                            for i in range(out_h):
                                yy = i + ki - padding
                                if yy < 0 or yy >= h:
                                    continue
                                for j in range(out_w):
                                    xx = j + kj - padding
                                    if xx < 0 or xx >= wd:
                                        continue
                                    acc += x[b, base + c, yy, xx] * gout[b, o, i, j]
                        gw[o, c, ki, kj] = acc
    return gw_arr
