"""Convolution arithmetic on float64 arrays, batch-first (N, C, H, W).

Everything is built on an im2col/col2im pair. A strided convolution is one
matrix product against the unfolded input; the up-convolution (transposed
convolution) is its exact adjoint, realized with the same two primitives
swapped, so `<conv(x), y> == <x, up(y)>` holds to roundoff by construction.
"""

from __future__ import annotations

import numpy as np

from ..errors import InputError


def output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Unfold (N, C, H, W) into (N, C*kh*kw, oh*ow) patch columns."""
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]          # (N, C, oh, ow, kh, kw)
    oh, ow = windows.shape[2], windows.shape[3]
    cols = windows.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, oh * ow)
    return np.ascontiguousarray(cols)


def col2im(cols: np.ndarray, x_shape: tuple[int, int, int, int],
           kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Adjoint of im2col: scatter-add (N, C*kh*kw, oh*ow) back to (N, C, H, W)."""
    n, c, h, w = x_shape
    oh = output_size(h, kh, stride, pad)
    ow = output_size(w, kw, stride, pad)
    cols6 = cols.reshape(n, c, kh, kw, oh, ow)
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += cols6[:, :, i, j]
    return xp[:, :, pad:pad + h, pad:pad + w]


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x[None], True
    if x.ndim != 4:
        raise InputError(f"expected (C, H, W) or (N, C, H, W), got shape {x.shape}")
    return x, False


def conv2d_forward(x, weight: np.ndarray, bias: np.ndarray, stride: int = 1,
                   pad: int | None = None):
    """Cross-correlate: y[o, u, v] = b[o] + sum_c,i,j W[o,c,i,j] x[c, u*s+i-p, v*s+j-p].

    ``pad`` defaults to (k - stride) // 2, which keeps size for stride 1 with
    odd kernels and exactly halves even inputs for stride 2. Returns
    (y, cache) where the cache feeds :func:`conv2d_backward`.
    """
    xb, squeeze = _as_batch(x)
    out_ch, in_ch, kh, kw = weight.shape
    if xb.shape[1] != in_ch:
        raise InputError(f"input has {xb.shape[1]} channels, weight expects {in_ch}")
    if bias.shape != (out_ch,):
        raise InputError(f"bias shape {bias.shape} != ({out_ch},)")
    if pad is None:
        pad = (kh - stride) // 2
    n, _, h, w = xb.shape
    oh, ow = output_size(h, kh, stride, pad), output_size(w, kw, stride, pad)
    cols = im2col(xb, kh, kw, stride, pad)
    w_mat = weight.reshape(out_ch, in_ch * kh * kw)
    y = np.matmul(w_mat, cols) + bias[:, None]
    y = y.reshape(n, out_ch, oh, ow)
    cache = (cols, xb.shape, weight, stride, pad)
    return (y[0] if squeeze else y), cache


def conv2d_backward(dy, cache):
    """Gradients of a conv2d_forward call: (dx, dweight, dbias)."""
    dyb, squeeze = _as_batch(dy)
    cols, x_shape, weight, stride, pad = cache
    out_ch, in_ch, kh, kw = weight.shape
    n = x_shape[0]
    dy_mat = dyb.reshape(n, out_ch, -1)
    dbias = dyb.sum(axis=(0, 2, 3))
    dw_mat = np.matmul(dy_mat, cols.transpose(0, 2, 1)).sum(axis=0)
    dweight = dw_mat.reshape(weight.shape)
    w_mat = weight.reshape(out_ch, in_ch * kh * kw)
    dcols = np.matmul(w_mat.T, dy_mat)
    dx = col2im(dcols, x_shape, kh, kw, stride, pad)
    return (dx[0] if squeeze else dx), dweight, dbias


def upconv2d_forward(x, weight: np.ndarray, bias: np.ndarray, stride: int = 2,
                     pad: int | None = None):
    """Transposed convolution: the adjoint of a stride-``stride`` conv2d.

    Weight layout matches conv layers, (out_ch, in_ch, kh, kw); spatial size
    grows to stride*(h-1) + k - 2*pad, i.e. doubles for k=4, stride=2, pad=1.
    """
    xb, squeeze = _as_batch(x)
    out_ch, in_ch, kh, kw = weight.shape
    if xb.shape[1] != in_ch:
        raise InputError(f"input has {xb.shape[1]} channels, weight expects {in_ch}")
    if bias.shape != (out_ch,):
        raise InputError(f"bias shape {bias.shape} != ({out_ch},)")
    if pad is None:
        pad = (kh - stride) // 2
    n, _, h, w = xb.shape
    oh = stride * (h - 1) + kh - 2 * pad
    ow = stride * (w - 1) + kw - 2 * pad
    wd_mat = weight.transpose(1, 0, 2, 3).reshape(in_ch, out_ch * kh * kw)
    x_mat = xb.reshape(n, in_ch, h * w)
    cols = np.matmul(wd_mat.T, x_mat)
    y = col2im(cols, (n, out_ch, oh, ow), kh, kw, stride, pad)
    y += bias[None, :, None, None]
    cache = (x_mat, xb.shape, weight, stride, pad, (n, out_ch, oh, ow))
    return (y[0] if squeeze else y), cache


def upconv2d_backward(dy, cache):
    """Gradients of an upconv2d_forward call: (dx, dweight, dbias)."""
    dyb, squeeze = _as_batch(dy)
    x_mat, x_shape, weight, stride, pad, y_shape = cache
    out_ch, in_ch, kh, kw = weight.shape
    n, _, h, w = x_shape
    dbias = dyb.sum(axis=(0, 2, 3))
    dcols = im2col(dyb, kh, kw, stride, pad)               # (N, out_ch*kh*kw, h*w)
    wd_mat = weight.transpose(1, 0, 2, 3).reshape(in_ch, out_ch * kh * kw)
    dx = np.matmul(wd_mat, dcols).reshape(x_shape)
    dwd_mat = np.matmul(x_mat, dcols.transpose(0, 2, 1)).sum(axis=0)
    dweight = dwd_mat.reshape(in_ch, out_ch, kh, kw).transpose(1, 0, 2, 3)
    return (dx[0] if squeeze else dx), dweight, dbias


def relu_forward(x):
    return np.maximum(x, 0.0)


def relu_backward(dy, y):
    """Backprop through relu given its output (slope 0 at the kink)."""
    return dy * (y > 0.0)


def fc_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """Fully connected layer, weight (in_features, out_features): y = x W + b."""
    if x.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise InputError(f"FC input shape {x.shape} incompatible with weight {weight.shape}")
    return x @ weight + bias


def fc_backward(dy: np.ndarray, x: np.ndarray, weight: np.ndarray):
    dweight = x.T @ dy
    dbias = dy.sum(axis=0)
    dx = dy @ weight.T
    return dx, dweight, dbias
