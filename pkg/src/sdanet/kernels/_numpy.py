"""Vectorized numpy fallback for the convolution kernels.

All three routines implement grouped 2-D cross-correlation with stride 1
and symmetric zero padding on float64 C-contiguous arrays. Shape checking
happens in the caller; these assume valid inputs.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND = "numpy"


def _pad2d(x, p):
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def conv2d_forward(x, w, bias, groups, padding):
    n, cin, _, _ = x.shape
    cout, cg, k, _ = w.shape
    xp = _pad2d(x, padding)
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    out_h, out_w = win.shape[2], win.shape[3]
    xg = win.reshape(n, groups, cg, out_h, out_w, k, k)
    wg = w.reshape(groups, cout // groups, cg, k, k)
    out = np.einsum("ngchwij,gocij->ngohw", xg, wg, optimize=True)
    out = out.reshape(n, cout, out_h, out_w)
    if bias is not None:
        out += bias[None, :, None, None]
    return np.ascontiguousarray(out)


def conv2d_backward_input(gout, w, groups, padding, in_h, in_w):
    n, cout, out_h, out_w = gout.shape
    cg, k = w.shape[1], w.shape[2]
    cin = cg * groups
    gp = _pad2d(gout, k - 1)
    win = sliding_window_view(gp, (k, k), axis=(2, 3))
    gg = win.reshape(n, groups, cout // groups, out_h + k - 1, out_w + k - 1, k, k)
    wf = w[:, :, ::-1, ::-1].reshape(groups, cout // groups, cg, k, k)
    gx = np.einsum("ngohwij,gocij->ngchw", gg, wf, optimize=True)
    gx = gx.reshape(n, cin, in_h + 2 * padding, in_w + 2 * padding)
    if padding:
        gx = gx[:, :, padding:padding + in_h, padding:padding + in_w]
    return np.ascontiguousarray(gx)


def conv2d_backward_weight(x, gout, groups, padding, ksize):
    n, cin, _, _ = x.shape
    cout, out_h, out_w = gout.shape[1], gout.shape[2], gout.shape[3]
    xp = _pad2d(x, padding)
    win = sliding_window_view(xp, (ksize, ksize), axis=(2, 3))
    xg = win.reshape(n, groups, cin // groups, out_h, out_w, ksize, ksize)
    gg = gout.reshape(n, groups, cout // groups, out_h, out_w)
    gw = np.einsum("ngchwij,ngohw->gocij", xg, gg, optimize=True)
    return np.ascontiguousarray(gw.reshape(cout, cin // groups, ksize, ksize))
