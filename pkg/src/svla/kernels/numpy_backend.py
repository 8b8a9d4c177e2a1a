"""Pure-numpy conv packing kernels (fallback backend).

Layout is NHWC throughout. im2col produces the patch matrix consumed by a
single BLAS gemm in the conv forward; col2im scatter-adds patch gradients
back onto the input. Both loop only over the kernel window (kh*kw slices),
so the heavy lifting stays inside numpy.
"""
import numpy as np

NAME = "numpy"


def conv_out_size(n, k, stride, pad):
    return (n + 2 * pad - k) // stride + 1


def im2col(x, kh, kw, stride, pad):
    """(N,H,W,C) -> (N,Ho,Wo,kh*kw*C) patch matrix."""
    n, h, w, c = x.shape
    ho = conv_out_size(h, kh, stride, pad)
    wo = conv_out_size(w, kw, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    cols = np.empty((n, ho, wo, kh, kw, c), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i, j, :] = x[
                :, i : i + stride * ho : stride, j : j + stride * wo : stride, :
            ]
    return cols.reshape(n, ho, wo, kh * kw * c)


def col2im(dcols, x_shape, kh, kw, stride, pad):
    """Adjoint of im2col: (N,Ho,Wo,kh*kw*C) -> (N,H,W,C)."""
    n, h, w, c = x_shape
    ho = conv_out_size(h, kh, stride, pad)
    wo = conv_out_size(w, kw, stride, pad)
    d6 = dcols.reshape(n, ho, wo, kh, kw, c)
    dxp = np.zeros((n, h + 2 * pad, w + 2 * pad, c), dtype=dcols.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[
                :, i : i + stride * ho : stride, j : j + stride * wo : stride, :
            ] += d6[:, :, :, i, j, :]
    if pad:
        return np.ascontiguousarray(dxp[:, pad : pad + h, pad : pad + w, :])
    return dxp
