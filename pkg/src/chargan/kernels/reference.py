"""Numpy implementation of the convolution kernels.

This is the fallback backend (and the only one that runs float64, which the
gradient-check tooling needs). Convolutions use cross-correlation semantics:
no kernel flip. Layout is NCHW for activations and [out, in, kh, kw] for
conv kernels.
"""

import numpy as np


def conv_out_size(extent, k, stride, pad):
    return (extent + 2 * pad - k) // stride + 1


def _im2col(xp, kh, kw, stride, out_h, out_w):
    # xp: padded input [N, C, Hp, Wp] -> cols [N, C, kh, kw, out_h, out_w]
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh, kw, out_h, out_w), dtype=xp.dtype)
    for u in range(kh):
        for v in range(kw):
            cols[:, :, u, v] = xp[:, :, u : u + stride * out_h : stride, v : v + stride * out_w : stride]
    return cols


def conv_forward(x, w, stride, pad):
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    out_h = conv_out_size(h, kh, stride, pad)
    out_w = conv_out_size(wd, kw, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = _im2col(xp, kh, kw, stride, out_h, out_w)
    cols = cols.reshape(n, c * kh * kw, out_h * out_w)
    w_mat = w.reshape(1, f, c * kh * kw)
    y = np.matmul(w_mat, cols)  # [n, f, out_h*out_w]
    return y.reshape(n, f, out_h, out_w)


def conv_bwd_input(gy, w, stride, pad, h, wd):
    n, f, out_h, out_w = gy.shape
    _, c, kh, kw = w.shape
    w_mat = w.reshape(1, f, c * kh * kw)
    gcols = np.matmul(w_mat.transpose(0, 2, 1), gy.reshape(n, f, out_h * out_w))
    gcols = gcols.reshape(n, c, kh, kw, out_h, out_w)
    gxp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad), dtype=gy.dtype)
    for u in range(kh):
        for v in range(kw):
            gxp[:, :, u : u + stride * out_h : stride, v : v + stride * out_w : stride] += gcols[:, :, u, v]
    if pad:
        return gxp[:, :, pad : pad + h, pad : pad + wd]
    return gxp


def conv_bwd_kernel(x, gy, stride, pad, kh, kw):
    n, c = x.shape[:2]
    f, out_h, out_w = gy.shape[1:]
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = _im2col(xp, kh, kw, stride, out_h, out_w).reshape(n, c * kh * kw, out_h * out_w)
    gw = np.tensordot(gy.reshape(n, f, out_h * out_w), cols, axes=([0, 2], [0, 2]))
    return gw.reshape(f, c, kh, kw)
