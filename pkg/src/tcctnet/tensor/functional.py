"""Differentiable neural-network primitives on :class:`DiffTensor`.

Every function here is a single graph node with a hand-written backward
rule. Reductions accumulate in float64 and cast back to the operand dtype.
"""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from . import _kernels
from .core import DiffTensor, ShapeError, acc_sum, make

Pair = Tuple[int, int]


def _pair(v) -> Pair:
    if isinstance(v, int):
        return (v, v)
    h, w = v
    return (int(h), int(w))


def conv_output_size(size: int, kernel: int, stride: int = 1, padding: int = 0) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def pad2d(x: DiffTensor, top: int, bottom: int, left: int, right: int) -> DiffTensor:
    """Zero-pad the last two axes of an N×C×H×W tensor."""
    if min(top, bottom, left, right) < 0:
        raise ValueError("padding must be non-negative")
    if not (top or bottom or left or right):
        return x
    H, W = x.shape[-2:]
    out = np.pad(x.values, ((0, 0),) * (x.ndim - 2) + ((top, bottom), (left, right)))
    return make(out, (x,), lambda g: (g[..., top:top + H, left:left + W],))


def conv2d(x: DiffTensor, weight: DiffTensor, bias: Optional[DiffTensor] = None,
           stride=1, padding=0) -> DiffTensor:
    """2-D cross-correlation of an N×C×H×W input with O×C×kh×kw weights."""
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    if sh < 1 or sw < 1 or ph < 0 or pw < 0:
        raise ValueError(f"invalid stride {stride} or padding {padding}")
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and weight, got {x.shape} and {weight.shape}")
    N, C, H, W = x.shape
    O, Cw, kh, kw = weight.shape
    if C != Cw:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape} vs weight {weight.shape}")
    if H + 2 * ph < kh or W + 2 * pw < kw:
        raise ShapeError(f"conv2d kernel larger than padded input: input {x.shape} vs weight {weight.shape}")
    if bias is not None and bias.shape != (O,):
        raise ShapeError(f"conv2d bias shape {bias.shape} does not match weight {weight.shape}")

    xp = np.pad(x.values, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.values
    Ho = conv_output_size(H, kh, sh, ph)
    Wo = conv_output_size(W, kw, sw, pw)
    K = C * kh * kw
    # channels-first columns (N, C*kh*kw, Ho*Wo) keep the product in N×O×(Ho*Wo) order
    if (kh, kw, sh, sw) == (1, 1, 1, 1):
        cols = np.ascontiguousarray(xp).reshape(N, K, Ho * Wo)
    else:
        cols = np.empty((N, C, kh, kw, Ho, Wo), dtype=xp.dtype)
        for i in range(kh):
            for j in range(kw):
                cols[:, :, i, j] = xp[:, :, i:i + sh * (Ho - 1) + 1:sh, j:j + sw * (Wo - 1) + 1:sw]
        cols = cols.reshape(N, K, Ho * Wo)
    w2 = weight.values.reshape(O, K)
    out = np.matmul(w2, cols)
    if bias is not None:
        out += bias.values[None, :, None]
    out = out.reshape(N, O, Ho, Wo)

    def backward(g):
        g3 = np.ascontiguousarray(g).reshape(N, O, Ho * Wo)
        gw = gb = gx = None
        if weight.requires_grad:
            gw = acc_sum(np.matmul(g3, cols.transpose(0, 2, 1)), axis=0).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = acc_sum(g3, axis=(0, 2))
        if x.requires_grad:
            gcols = np.matmul(w2.T, g3).reshape(N, C, kh, kw, Ho, Wo)
            gxp = np.zeros(xp.shape, dtype=xp.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + sh * (Ho - 1) + 1:sh, j:j + sw * (Wo - 1) + 1:sw] += gcols[:, :, i, j]
            gx = gxp[:, :, ph:ph + H, pw:pw + W]
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return make(out, parents, backward)


def avg_pool2d(x: DiffTensor, kernel, stride=None) -> DiffTensor:
    """Mean over kh×kw windows of the last two axes (no padding)."""
    kh, kw = _pair(kernel)
    sh, sw = _pair(stride if stride is not None else kernel)
    H, W = x.shape[-2:]
    if kh > H or kw > W:
        raise ShapeError(f"pooling window {(kh, kw)} larger than input {x.shape}")
    if sh < 1 or sw < 1:
        raise ValueError(f"invalid pooling stride {(sh, sw)}")
    Ho = (H - kh) // sh + 1
    Wo = (W - kw) // sw + 1
    lead = x.shape[:-2]
    x3 = np.ascontiguousarray(x.values).reshape((-1, H, W))
    out = np.empty((x3.shape[0], Ho, Wo), dtype=x.dtype)
    _kernels.pool_forward(x3, kh, kw, sh, sw, out)

    def backward(g):
        gx = np.empty_like(x3)
        _kernels.pool_backward(np.ascontiguousarray(g).reshape(out.shape), kh, kw, sh, sw, gx)
        return (gx.reshape(x.shape),)

    return make(out.reshape(lead + (Ho, Wo)), (x,), backward)

def batch_norm(x: DiffTensor, scale: DiffTensor, shift: DiffTensor,
               running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.1, eps: float = 1e-5) -> DiffTensor:
    """Per-channel normalization of an N×C×H×W tensor.

    In training mode the batch statistics are used and ``running_mean`` /
    ``running_var`` are updated in place (unbiased variance for the running
    estimate). In eval mode the running statistics are used.
    """
    if x.ndim != 4:
        raise ShapeError(f"batch_norm expects N×C×H×W input, got {x.shape}")
    N, C, H, W = x.shape
    if scale.shape != (C,) or shift.shape != (C,):
        raise ShapeError(f"batch_norm parameters {scale.shape}/{shift.shape} do not match input {x.shape}")
    count = N * H * W
    xv = np.ascontiguousarray(x.values).reshape(N, C, H * W)
    if training:
        if count < 2:
            raise ValueError("batch_norm in training mode needs at least 2 values per channel")
        mean, var = _kernels.channel_moments(xv)
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        running_var *= 1 - momentum
        running_var += momentum * var * count / (count - 1)
    else:
        mean = np.asarray(running_mean, dtype=np.float64)
        var = np.asarray(running_var, dtype=np.float64)
    inv_std = 1.0 / np.sqrt(var + eps)
    scale64 = scale.values.astype(np.float64)
    out = np.empty_like(xv)
    _kernels.bn_apply(xv, mean, inv_std, scale64, shift.values.astype(np.float64), out)

    def backward(g):
        g3 = np.ascontiguousarray(g).reshape(N, C, H * W)
        sum_g, sum_gxhat = _kernels.bn_backward_sums(xv, g3, mean, inv_std)
        gscale = sum_gxhat.astype(scale.dtype) if scale.requires_grad else None
        gshift = sum_g.astype(shift.dtype) if shift.requires_grad else None
        gx = None
        if x.requires_grad:
            gx = np.empty_like(xv)
            _kernels.bn_backward_input(xv, g3, mean, inv_std, scale64, sum_g, sum_gxhat, training, gx)
            gx = gx.reshape(x.shape)
        return gx, gscale, gshift

    return make(out.reshape(x.shape), (x, scale, shift), backward)

def layer_norm(x: DiffTensor, scale: DiffTensor, shift: DiffTensor, eps: float = 1e-5) -> DiffTensor:
    """Normalize over the last axis, then apply an elementwise affine map."""
    D = x.shape[-1]
    if scale.shape != (D,) or shift.shape != (D,):
        raise ShapeError(f"layer_norm parameters {scale.shape} do not match input {x.shape}")
    mean = acc_sum(x.values, axis=-1, keepdims=True) / D
    centered = x.values - mean
    var = acc_sum(centered * centered, axis=-1, keepdims=True) / D
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = xhat * scale.values + shift.values

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        gscale = acc_sum(g * xhat, axis=lead) if scale.requires_grad else None
        gshift = acc_sum(g, axis=lead) if shift.requires_grad else None
        gx = None
        if x.requires_grad:
            gxhat = g * scale.values
            m1 = acc_sum(gxhat, axis=-1, keepdims=True) / D
            m2 = acc_sum(gxhat * xhat, axis=-1, keepdims=True) / D
            gx = (gxhat - m1 - xhat * m2) * inv_std
        return gx, gscale, gshift

    return make(out, (x, scale, shift), backward)


def elu(x: DiffTensor, alpha: float = 1.0) -> DiffTensor:
    if alpha <= 0:
        raise ValueError("elu alpha must be positive")
    v = np.ascontiguousarray(x.values)
    out = np.minimum(v, 0)
    np.expm1(out, out=out)
    _kernels.elu_select(v.reshape(-1), float(alpha), out.reshape(-1))

    def backward(g):
        gx = np.empty_like(v)
        _kernels.elu_backward(v.reshape(-1), out.reshape(-1), np.ascontiguousarray(g, dtype=v.dtype).reshape(-1),
                              float(alpha), gx.reshape(-1))
        return (gx,)

    return make(out, (x,), backward)

def linear(x: DiffTensor, weight: DiffTensor, bias: Optional[DiffTensor] = None) -> DiffTensor:
    """``x @ weight + bias`` with ``weight`` of shape (D_in, D_out)."""
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear dimension mismatch: input {x.shape} vs weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ShapeError(f"linear bias {bias.shape} does not match weight {weight.shape}")
    out = x.values @ weight.values
    if bias is not None:
        out = out + bias.values

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = g @ weight.values.T if x.requires_grad else None
        gw = x.values.reshape(-1, x.shape[-1]).T @ g2 if weight.requires_grad else None
        if bias is None:
            return gx, gw
        gb = acc_sum(g2, axis=0) if bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return make(out, parents, backward)


def softmax(x: DiffTensor, axis: int = -1) -> DiffTensor:
    shifted = x.values - x.values.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / acc_sum(e, axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - acc_sum(g * out, axis=axis, keepdims=True)),)

    return make(out, (x,), backward)


def log_softmax(x: DiffTensor, axis: int = -1) -> DiffTensor:
    shifted = x.values - x.values.max(axis=axis, keepdims=True)
    out = shifted - np.log(acc_sum(np.exp(shifted), axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(out) * acc_sum(g, axis=axis, keepdims=True),)

    return make(out, (x,), backward)


def dropout(x: DiffTensor, rate: float, training: bool, rng: Optional[np.random.Generator] = None) -> DiffTensor:
    """Inverted dropout: survivors are rescaled by 1/(1-rate) at train time."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs a random generator")
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return make(x.values * mask, (x,), lambda g: (g * mask,))


def pick(x: DiffTensor, labels: np.ndarray) -> DiffTensor:
    """Select ``x[i, labels[i]]`` for each row of a 2-D tensor."""
    labels = np.asarray(labels, dtype=np.int64)
    rows = np.arange(x.shape[0])

    def backward(g):
        full = np.zeros_like(x.values)
        full[rows, labels] = g
        return (full,)

    return make(x.values[rows, labels], (x,), backward)


def flatten(x: DiffTensor, start: int = 1) -> DiffTensor:
    return x.reshape(x.shape[:start] + (-1,))
