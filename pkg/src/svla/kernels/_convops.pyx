# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled conv packing kernels (hot path of the image encoder).

Same contract as numpy_backend: NHWC im2col/col2im around a BLAS gemm.
The typed loops pack patches in one pass without materialising a padded
copy of the input.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()

NAME = "cython"

ctypedef fused real:
    float
    double


def conv_out_size(n, k, stride, pad):
    return (n + 2 * pad - k) // stride + 1


def im2col(x, int kh, int kw, int stride, int pad):
    n, h, w, c = x.shape
    ho = conv_out_size(h, kh, stride, pad)
    wo = conv_out_size(w, kw, stride, pad)
    if x.dtype not in (np.float32, np.float64):
        raise TypeError("im2col: unsupported dtype %s" % x.dtype)
    x = np.ascontiguousarray(x)
    cols = np.empty((n, ho, wo, kh * kw * c), dtype=x.dtype)
    _im2col_loop(x, cols.reshape(n, ho, wo, kh, kw, c), kh, kw, stride, pad)
    return cols


def _im2col_loop(real[:, :, :, ::1] x, real[:, :, :, :, :, ::1] cols,
                 int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t ho = cols.shape[1], wo = cols.shape[2]
    cdef Py_ssize_t b, oh, ow, i, j, ch, ih, iw
    with nogil:
        for b in range(n):
            for oh in range(ho):
                for i in range(kh):
                    ih = oh * stride + i - pad
                    for ow in range(wo):
                        for j in range(kw):
                            iw = ow * stride + j - pad
                            if 0 <= ih < h and 0 <= iw < w:
                                for ch in range(c):
                                    cols[b, oh, ow, i, j, ch] = x[b, ih, iw, ch]
                            else:
                                for ch in range(c):
                                    cols[b, oh, ow, i, j, ch] = 0.0


def col2im(dcols, x_shape, int kh, int kw, int stride, int pad):
    n, h, w, c = x_shape
    ho = conv_out_size(h, kh, stride, pad)
    wo = conv_out_size(w, kw, stride, pad)
    if dcols.dtype not in (np.float32, np.float64):
        raise TypeError("col2im: unsupported dtype %s" % dcols.dtype)
    dx = np.zeros(tuple(x_shape), dtype=dcols.dtype)
    d6 = np.ascontiguousarray(dcols).reshape(n, ho, wo, kh, kw, c)
    _col2im_loop(d6, dx, kh, kw, stride, pad)
    return dx


def _col2im_loop(real[:, :, :, :, :, ::1] d6, real[:, :, :, ::1] dx,
                 int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n = dx.shape[0], h = dx.shape[1], w = dx.shape[2], c = dx.shape[3]
    cdef Py_ssize_t ho = d6.shape[1], wo = d6.shape[2]
    cdef Py_ssize_t b, oh, ow, i, j, ch, ih, iw
    with nogil:
        for b in range(n):
            for oh in range(ho):
                for i in range(kh):
                    ih = oh * stride + i - pad
                    if ih < 0 or ih >= h:
                        continue
                    for ow in range(wo):
                        for j in range(kw):
                            iw = ow * stride + j - pad
                            if iw < 0 or iw >= w:
                                continue
                            for ch in range(c):
                                dx[b, ih, iw, ch] += d6[b, oh, ow, i, j, ch]
