"""Differentiable primitives over Tensor.

Every op validates shapes, computes the forward value with numpy (or the
compiled conv kernels) and records a backward closure. Convolutions are
cross-correlations (no kernel flip); dropout is inverted (scaling happens at
train time so inference is the identity).
"""

import numpy as np

from . import kernels
from .errors import ShapeError, UsageError
from .tensor import Tensor, check_same_dtype, make_result


def _unbroadcast(g, shape):
    # reduce a broadcast gradient back to the parent's shape
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    check_same_dtype(a, b)
    out = a.data + b.data

    def backward(gy):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(gy, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(gy, b.data.shape))

    return make_result(out, "add", (a, b), backward)


def mul(a, b):
    check_same_dtype(a, b)
    out = a.data * b.data

    def backward(gy):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(gy * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(gy * a.data, b.data.shape))

    return make_result(out, "mul", (a, b), backward)


def scale(x, s):
    out = x.data * x.data.dtype.type(s)

    def backward(gy):
        if x.requires_grad:
            x.accumulate_grad(gy * x.data.dtype.type(s))

    return make_result(out, "scale", (x,), backward)


def add_scalar(x, s):
    out = x.data + x.data.dtype.type(s)

    def backward(gy):
        if x.requires_grad:
            x.accumulate_grad(gy)

    return make_result(out, "add_scalar", (x,), backward)


def neg(x):
    return scale(x, -1.0)


def sub(a, b):
    return add(a, neg(b))


def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}")
    check_same_dtype(a, b)
    out = a.data @ b.data

    def backward(gy):
        if a.requires_grad:
            a.accumulate_grad(gy @ b.data.T)
        if b.requires_grad:
            b.accumulate_grad(a.data.T @ gy)

    return make_result(out, "matmul", (a, b), backward)


def reshape(x, shape):
    out = x.data.reshape(shape)

    def backward(gy):
        if x.requires_grad:
            x.accumulate_grad(gy.reshape(x.data.shape))

    return make_result(out, "reshape", (x,), backward)


def leaky_relu(x, alpha):
    if not 0.0 <= alpha < 1.0:
        raise UsageError(f"leaky_relu alpha must be in [0,1), got {alpha}")
    mask = x.data >= 0
    out = np.where(mask, x.data, x.data.dtype.type(alpha) * x.data)

    def backward(gy):
        if x.requires_grad:
            x.accumulate_grad(np.where(mask, gy, gy.dtype.type(alpha) * gy))

    return make_result(out, "leaky_relu", (x,), backward)


def sigmoid(x):
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    out[~pos] = e / (1.0 + e)

    def backward(gy):
        if x.requires_grad:
            x.accumulate_grad(gy * out * (1.0 - out))

    return make_result(out, "sigmoid", (x,), backward)


def tanh(x):
    out = np.tanh(x.data)

    def backward(gy):
        if x.requires_grad:
            x.accumulate_grad(gy * (1.0 - out * out))

    return make_result(out, "tanh", (x,), backward)


def softmax(x):
    """Row softmax over [N, K] logits, max-subtracted for stability."""
    if x.data.ndim != 2:
        raise ShapeError(f"softmax expects [N, K] logits, got {x.data.shape}")
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)

    def backward(gy):
        if x.requires_grad:
            dot = (gy * out).sum(axis=1, keepdims=True)
            x.accumulate_grad((gy - dot) * out)

    return make_result(out, "softmax", (x,), backward)


def log(x):
    out = np.log(x.data)

    def backward(gy):
        if x.requires_grad:
            x.accumulate_grad(gy / x.data)

    return make_result(out, "log", (x,), backward)


def clip(x, lo, hi):
    out = np.clip(x.data, lo, hi)
    mask = (x.data >= lo) & (x.data <= hi)

    def backward(gy):
        if x.requires_grad:
            x.accumulate_grad(np.where(mask, gy, gy.dtype.type(0.0)))

    return make_result(out, "clip", (x,), backward)


def take_per_row(x, idx):
    """out[i] = x[i, idx[i]] for a [N, K] tensor and integer index vector."""
    if x.data.ndim != 2:
        raise ShapeError(f"take_per_row expects [N, K], got {x.data.shape}")
    idx = np.asarray(idx)
    if idx.shape != (x.data.shape[0],):
        raise ShapeError(f"index vector shape {idx.shape} does not match batch {x.data.shape[0]}")
    if idx.min(initial=0) < 0 or idx.max(initial=0) >= x.data.shape[1]:
        raise UsageError(f"index out of range for {x.data.shape[1]} columns")
    rows = np.arange(x.data.shape[0])
    out = x.data[rows, idx]

    def backward(gy):
        if x.requires_grad:
            g = np.zeros_like(x.data)
            g[rows, idx] = gy
            x.accumulate_grad(g)

    return make_result(out, "take_per_row", (x,), backward)


def embedding(table, idx):
    """Row lookup out[i] = table[idx[i]] with scatter-add gradient."""
    idx = np.asarray(idx)
    if idx.min(initial=0) < 0 or idx.max(initial=0) >= table.data.shape[0]:
        raise UsageError(f"label out of range for {table.data.shape[0]} classes")
    out = table.data[idx]

    def backward(gy):
        if table.requires_grad:
            g = np.zeros_like(table.data)
            np.add.at(g, idx, gy)
            table.accumulate_grad(g)

    return make_result(out, "embedding", (table,), backward)


def tsum(x):
    out = np.asarray(x.data.sum(), dtype=x.data.dtype)

    def backward(gy):
        if x.requires_grad:
            x.accumulate_grad(np.broadcast_to(gy, x.data.shape).copy())

    return make_result(out, "sum", (x,), backward)


def tmean(x):
    n = x.data.size
    out = np.asarray(x.data.mean(), dtype=x.data.dtype)

    def backward(gy):
        if x.requires_grad:
            x.accumulate_grad(np.broadcast_to(gy / n, x.data.shape).astype(x.data.dtype))

    return make_result(out, "mean", (x,), backward)


def conv2d(x, w, b, stride=1, pad=0):
    """Cross-correlation of [N,C,H,W] with kernels [F,C,kh,kw]."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and kernel, got {x.data.shape}, {w.data.shape}")
    n, c, h, wd = x.data.shape
    f, ck, kh, kw = w.data.shape
    if ck != c:
        raise ShapeError(f"conv2d kernel expects {ck} input channels, input has {c}")
    if stride < 1:
        raise UsageError(f"conv2d stride must be >= 1, got {stride}")
    if kh > h + 2 * pad or kw > wd + 2 * pad:
        raise ShapeError(f"kernel {kh}x{kw} larger than padded input {h + 2 * pad}x{wd + 2 * pad}")
    parents = (x, w) if b is None else (x, w, b)
    check_same_dtype(*parents)
    y = kernels.conv_forward(x.data, w.data, stride, pad)
    if b is not None:
        if b.data.shape != (f,):
            raise ShapeError(f"conv2d bias must have shape ({f},), got {b.data.shape}")
        y = y + b.data.reshape(1, f, 1, 1)

    def backward(gy):
        if x.requires_grad:
            x.accumulate_grad(kernels.conv_bwd_input(gy, w.data, stride, pad, h, wd))
        if w.requires_grad:
            w.accumulate_grad(kernels.conv_bwd_kernel(x.data, gy, stride, pad, kh, kw))
        if b is not None and b.requires_grad:
            b.accumulate_grad(gy.sum(axis=(0, 2, 3)))

    return make_result(y, "conv2d", parents, backward)


def conv_transpose2d(x, w, b, stride=1, pad=0):
    """Transposed convolution: [N,C,H,W] with kernels [C,F,kh,kw].

    Forward equals the gradient of conv2d with respect to its input, so
    output extent is (H-1)*stride - 2*pad + kh.
    """
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv_transpose2d expects 4-D input and kernel, got {x.data.shape}, {w.data.shape}")
    n, c, h, wd = x.data.shape
    ck, f, kh, kw = w.data.shape
    if ck != c:
        raise ShapeError(f"conv_transpose2d kernel expects {ck} input channels, input has {c}")
    if stride < 1:
        raise UsageError(f"conv_transpose2d stride must be >= 1, got {stride}")
    out_h = (h - 1) * stride - 2 * pad + kh
    out_w = (wd - 1) * stride - 2 * pad + kw
    if out_h <= 0 or out_w <= 0:
        raise ShapeError(f"conv_transpose2d output extent {out_h}x{out_w} is not positive")
    parents = (x, w) if b is None else (x, w, b)
    check_same_dtype(*parents)
    y = kernels.conv_bwd_input(x.data, w.data, stride, pad, out_h, out_w)
    if b is not None:
        if b.data.shape != (f,):
            raise ShapeError(f"conv_transpose2d bias must have shape ({f},), got {b.data.shape}")
        y = y + b.data.reshape(1, f, 1, 1)

    def backward(gy):
        if x.requires_grad:
            x.accumulate_grad(kernels.conv_forward(gy, w.data, stride, pad))
        if w.requires_grad:
            w.accumulate_grad(kernels.conv_bwd_kernel(gy, x.data, stride, pad, kh, kw))
        if b is not None and b.requires_grad:
            b.accumulate_grad(gy.sum(axis=(0, 2, 3)))

    return make_result(y, "conv_transpose2d", parents, backward)


def _bn_axes(shape):
    if len(shape) == 2:
        return (0,), (1, shape[1])
    if len(shape) == 4:
        return (0, 2, 3), (1, shape[1], 1, 1)
    raise ShapeError(f"batchnorm expects [N,C] or [N,C,H,W], got {shape}")


def batchnorm(x, gamma, beta, running_mean, running_var, momentum, eps, mode, update_stats=None):
    """Per-channel normalization.

    Train mode normalizes by batch statistics (biased variance) and folds
    them into the running buffers with ``new = (1-momentum)*old +
    momentum*batch``; infer mode normalizes by the running buffers.
    ``update_stats`` defaults to (mode == "train"); pass False to evaluate
    batch statistics without touching the buffers (frozen layers).
    """
    axes, bshape = _bn_axes(x.data.shape)
    c = x.data.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(f"batchnorm gamma/beta must have shape ({c},)")
    check_same_dtype(x, gamma, beta)
    if update_stats is None:
        update_stats = mode == "train"
    if mode == "train":
        if x.data.shape[0] < 2:
            raise UsageError(f"batchnorm train mode requires batch size >= 2, got {x.data.shape[0]}")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if update_stats:
            running_mean *= 1.0 - momentum
            running_mean += momentum * mu
            running_var *= 1.0 - momentum
            running_var += momentum * var
    elif mode == "infer":
        mu = running_mean.astype(x.data.dtype)
        var = running_var.astype(x.data.dtype)
    else:
        raise UsageError(f"batchnorm mode must be 'train' or 'infer', got {mode!r}")
    inv = 1.0 / np.sqrt(var + x.data.dtype.type(eps))
    xhat = (x.data - mu.reshape(bshape)) * inv.reshape(bshape)
    out = gamma.data.reshape(bshape) * xhat + beta.data.reshape(bshape)
    m = x.data.size // c

    def backward(gy):
        if gamma.requires_grad:
            gamma.accumulate_grad((gy * xhat).sum(axis=axes))
        if beta.requires_grad:
            beta.accumulate_grad(gy.sum(axis=axes))
        if x.requires_grad:
            gi = gamma.data.reshape(bshape) * inv.reshape(bshape)
            if mode == "train":
                gsum = gy.sum(axis=axes).reshape(bshape)
                gxhat = (gy * xhat).sum(axis=axes).reshape(bshape)
                x.accumulate_grad(gi * (gy - gsum / m - xhat * gxhat / m))
            else:
                x.accumulate_grad(gi * gy)

    return make_result(out, "batchnorm", (x, gamma, beta), backward)


def dropout(x, rate, mode, rng):
    """Inverted dropout: zero with probability ``rate`` and scale survivors
    by 1/(1-rate) at train time; identity at infer time."""
    if not 0.0 <= rate < 1.0:
        raise UsageError(f"dropout rate must be in [0,1), got {rate}")
    if mode == "infer" or rate == 0.0:
        return x
    if mode != "train":
        raise UsageError(f"dropout mode must be 'train' or 'infer', got {mode!r}")
    keep = (rng.random(x.data.shape) >= rate).astype(x.data.dtype)
    keep *= x.data.dtype.type(1.0 / (1.0 - rate))
    out = x.data * keep

    def backward(gy):
        if x.requires_grad:
            x.accumulate_grad(gy * keep)

    return make_result(out, "dropout", (x,), backward)
