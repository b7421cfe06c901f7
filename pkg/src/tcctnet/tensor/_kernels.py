"""Fused single-pass loops for the memory-bound primitives.

Arrays are passed contiguous; batch-norm kernels take an (N, C, M) view.
All reductions accumulate in float64.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def elu_select(x, alpha, out):
    # out holds expm1(min(x, 0)) on entry
    for i in range(x.size):
        v = x[i]
        out[i] = v if v > 0 else alpha * out[i]


@njit(cache=True)
def elu_backward(x, out, g, alpha, gx):
    for i in range(x.size):
        gx[i] = g[i] if x[i] > 0 else g[i] * (out[i] + alpha)


@njit(cache=True)
def channel_moments(x):
    N, C, M = x.shape
    mean = np.zeros(C)
    var = np.zeros(C)
    for n in range(N):
        for c in range(C):
            s = 0.0
            for m in range(M):
                s += x[n, c, m]
            mean[c] += s
    count = N * M
    for c in range(C):
        mean[c] /= count
    for n in range(N):
        for c in range(C):
            mu = mean[c]
            s = 0.0
            for m in range(M):
                d = x[n, c, m] - mu
                s += d * d
            var[c] += s
    for c in range(C):
        var[c] /= count
    return mean, var


@njit(cache=True)
def bn_apply(x, mean, inv_std, scale, shift, out):
    N, C, M = x.shape
    for n in range(N):
        for c in range(C):
            a = inv_std[c] * scale[c]
            b = shift[c] - mean[c] * a
            for m in range(M):
                out[n, c, m] = x[n, c, m] * a + b


@njit(cache=True)
def bn_backward_sums(x, g, mean, inv_std):
    N, C, M = x.shape
    sum_g = np.zeros(C)
    sum_gxhat = np.zeros(C)
    for n in range(N):
        for c in range(C):
            mu = mean[c]
            s0 = 0.0
            s1 = 0.0
            for m in range(M):
                gv = g[n, c, m]
                s0 += gv
                s1 += gv * (x[n, c, m] - mu)
            sum_g[c] += s0
            sum_gxhat[c] += s1 * inv_std[c]
    return sum_g, sum_gxhat


@njit(cache=True)
def bn_backward_input(x, g, mean, inv_std, scale, sum_g, sum_gxhat, training, gx):
    N, C, M = x.shape
    count = N * M
    for n in range(N):
        for c in range(C):
            k = scale[c] * inv_std[c]
            if training:
                mg = sum_g[c] / count
                mx = sum_gxhat[c] / count * inv_std[c]
                mu = mean[c]
                for m in range(M):
                    gx[n, c, m] = k * (g[n, c, m] - mg - (x[n, c, m] - mu) * mx)
            else:
                for m in range(M):
                    gx[n, c, m] = k * g[n, c, m]


@njit(cache=True)
def pool_forward(x, kh, kw, sh, sw, out):
    B, Ho, Wo = out.shape
    inv = 1.0 / (kh * kw)
    for b in range(B):
        for oh in range(Ho):
            for ow in range(Wo):
                s = 0.0
                for i in range(kh):
                    for j in range(kw):
                        s += x[b, oh * sh + i, ow * sw + j]
                out[b, oh, ow] = s * inv


@njit(cache=True)
def pool_backward(g, kh, kw, sh, sw, gx):
    B, Ho, Wo = g.shape
    H, W = gx.shape[1], gx.shape[2]
    acc = np.zeros((H, W))
    inv = 1.0 / (kh * kw)
    for b in range(B):
        acc[:, :] = 0.0
        for oh in range(Ho):
            for ow in range(Wo):
                v = g[b, oh, ow] * inv
                for i in range(kh):
                    for j in range(kw):
                        acc[oh * sh + i, ow * sw + j] += v
        for h in range(H):
            for w in range(W):
                gx[b, h, w] = acc[h, w]
