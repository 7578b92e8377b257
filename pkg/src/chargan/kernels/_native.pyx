# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled float32 convolution kernels: C-level im2col/col2im feeding BLAS sgemm.

Semantics mirror kernels.reference exactly (cross-correlation, NCHW). The
whole batch goes through a single GEMM per call; gather/scatter and layout
transposes are plain C loops. Accumulation order is fixed, so results are
bitwise reproducible run to run on the same build.
"""

import numpy as np

cimport numpy as cnp
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport sgemm

cnp.import_array()


cdef void _gemm_nn(float* a, float* b, float* c, int m, int n, int k,
                   float alpha, float beta) noexcept nogil:
    # row-major c[m,n] = alpha * a[m,k] @ b[k,n] + beta * c
    cdef char tn = b'N'
    sgemm(&tn, &tn, &n, &m, &k, &alpha, b, &n, a, &k, &beta, c, &n)


cdef void _gemm_tn(float* a, float* b, float* c, int m, int n, int k,
                   float alpha, float beta) noexcept nogil:
    # row-major c[m,n] = alpha * a[k,m].T @ b[k,n] + beta * c
    cdef char tn = b'N'
    cdef char tt = b'T'
    sgemm(&tn, &tt, &n, &m, &k, &alpha, b, &n, a, &m, &beta, c, &n)


cdef void _gemm_nt(float* a, float* b, float* c, int m, int n, int k,
                   float alpha, float beta) noexcept nogil:
    # row-major c[m,n] = alpha * a[m,k] @ b[n,k].T + beta * c
    cdef char tt = b'T'
    cdef char tn = b'N'
    sgemm(&tt, &tn, &n, &m, &k, &alpha, b, &k, a, &k, &beta, c, &n)


cdef void _im2col(const float* xp, float* cols, int ld, int c, int hp, int wp,
                  int kh, int kw, int stride, int oh, int ow) noexcept nogil:
    # xp: one sample [c, hp, wp]; cols: [c*kh*kw, ld] block starting at the
    # sample's column offset (caller pre-offsets the pointer)
    cdef int ch, u, v, i, j, row
    cdef const float* src
    cdef float* dst
    for ch in range(c):
        for u in range(kh):
            for v in range(kw):
                row = (ch * kh + u) * kw + v
                for i in range(oh):
                    src = xp + (ch * hp + i * stride + u) * wp + v
                    dst = cols + row * ld + i * ow
                    if stride == 1:
                        memcpy(dst, src, ow * sizeof(float))
                    else:
                        for j in range(ow):
                            dst[j] = src[j * stride]


cdef void _col2im(const float* cols, int ld, float* gxp, int c, int hp, int wp,
                  int kh, int kw, int stride, int oh, int ow) noexcept nogil:
    cdef int ch, u, v, i, j, row
    cdef float* dst
    cdef const float* src
    for ch in range(c):
        for u in range(kh):
            for v in range(kw):
                row = (ch * kh + u) * kw + v
                for i in range(oh):
                    src = cols + row * ld + i * ow
                    dst = gxp + (ch * hp + i * stride + u) * wp + v
                    for j in range(ow):
                        dst[j * stride] += src[j]


cdef void _nfl_to_fnl(const float* src, float* dst, int n, int f, int l) noexcept nogil:
    cdef int i, j
    for i in range(n):
        for j in range(f):
            memcpy(dst + (j * n + i) * l, src + (i * f + j) * l, l * sizeof(float))


cdef void _fnl_to_nfl(const float* src, float* dst, int n, int f, int l) noexcept nogil:
    cdef int i, j
    for i in range(n):
        for j in range(f):
            memcpy(dst + (i * f + j) * l, src + (j * n + i) * l, l * sizeof(float))


def conv_forward(cnp.ndarray[float, ndim=4] x, cnp.ndarray[float, ndim=4] w,
                 int stride, int pad):
    cdef int n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef int f = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef int oh = (h + 2 * pad - kh) // stride + 1
    cdef int ow = (wd + 2 * pad - kw) // stride + 1
    cdef int ckk = c * kh * kw, l = oh * ow, nl = n * l
    cdef cnp.ndarray[float, ndim=4] xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cdef int hp = h + 2 * pad, wp = wd + 2 * pad
    cdef cnp.ndarray[float, ndim=4] y = np.empty((n, f, oh, ow), dtype=np.float32)
    cdef cnp.ndarray[float, ndim=2] cols = np.empty((ckk, nl), dtype=np.float32)
    cdef cnp.ndarray[float, ndim=2] ybig = np.empty((f, nl), dtype=np.float32)
    cdef cnp.ndarray[float, ndim=4] wc = np.ascontiguousarray(w)
    cdef float* xp_p = <float*> xp.data
    cdef float* y_p = <float*> y.data
    cdef float* cols_p = <float*> cols.data
    cdef float* ybig_p = <float*> ybig.data
    cdef float* w_p = <float*> wc.data
    cdef int i
    with nogil:
        for i in range(n):
            _im2col(xp_p + i * c * hp * wp, cols_p + i * l, nl, c, hp, wp, kh, kw, stride, oh, ow)
        _gemm_nn(w_p, cols_p, ybig_p, f, nl, ckk, 1.0, 0.0)
        _fnl_to_nfl(ybig_p, y_p, n, f, l)
    return y


def conv_bwd_input(cnp.ndarray[float, ndim=4] gy, cnp.ndarray[float, ndim=4] w,
                   int stride, int pad, int h, int wd):
    cdef int n = gy.shape[0], f = gy.shape[1], oh = gy.shape[2], ow = gy.shape[3]
    cdef int c = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef int ckk = c * kh * kw, l = oh * ow, nl = n * l
    cdef int hp = h + 2 * pad, wp = wd + 2 * pad
    cdef cnp.ndarray[float, ndim=4] gyc = np.ascontiguousarray(gy)
    cdef cnp.ndarray[float, ndim=4] wc = np.ascontiguousarray(w)
    cdef cnp.ndarray[float, ndim=4] gxp = np.zeros((n, c, hp, wp), dtype=np.float32)
    cdef cnp.ndarray[float, ndim=2] gyt = np.empty((f, nl), dtype=np.float32)
    cdef cnp.ndarray[float, ndim=2] gcols = np.empty((ckk, nl), dtype=np.float32)
    cdef float* gy_p = <float*> gyc.data
    cdef float* w_p = <float*> wc.data
    cdef float* gxp_p = <float*> gxp.data
    cdef float* gyt_p = <float*> gyt.data
    cdef float* gcols_p = <float*> gcols.data
    cdef int i
    with nogil:
        _nfl_to_fnl(gy_p, gyt_p, n, f, l)
        _gemm_tn(w_p, gyt_p, gcols_p, ckk, nl, f, 1.0, 0.0)
        for i in range(n):
            _col2im(gcols_p + i * l, nl, gxp_p + i * c * hp * wp, c, hp, wp, kh, kw, stride, oh, ow)
    if pad:
        return np.ascontiguousarray(gxp[:, :, pad : pad + h, pad : pad + wd])
    return gxp


def conv_bwd_kernel(cnp.ndarray[float, ndim=4] x, cnp.ndarray[float, ndim=4] gy,
                    int stride, int pad, int kh, int kw):
    cdef int n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef int f = gy.shape[1], oh = gy.shape[2], ow = gy.shape[3]
    cdef int ckk = c * kh * kw, l = oh * ow, nl = n * l
    cdef cnp.ndarray[float, ndim=4] xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else np.ascontiguousarray(x)
    cdef int hp = h + 2 * pad, wp = wd + 2 * pad
    cdef cnp.ndarray[float, ndim=4] gyc = np.ascontiguousarray(gy)
    cdef cnp.ndarray[float, ndim=2] gw = np.zeros((f, ckk), dtype=np.float32)
    cdef cnp.ndarray[float, ndim=2] cols = np.empty((ckk, nl), dtype=np.float32)
    cdef cnp.ndarray[float, ndim=2] gyt = np.empty((f, nl), dtype=np.float32)
    cdef float* xp_p = <float*> xp.data
    cdef float* gy_p = <float*> gyc.data
    cdef float* gw_p = <float*> gw.data
    cdef float* cols_p = <float*> cols.data
    cdef float* gyt_p = <float*> gyt.data
    cdef int i
    with nogil:
        for i in range(n):
            _im2col(xp_p + i * c * hp * wp, cols_p + i * l, nl, c, hp, wp, kh, kw, stride, oh, ow)
        _nfl_to_fnl(gy_p, gyt_p, n, f, l)
        _gemm_nt(gyt_p, cols_p, gw_p, f, ckk, nl, 1.0, 0.0)
    return gw.reshape(f, c, kh, kw)
