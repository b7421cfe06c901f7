"""Temporal-spatial stream: convolution front-end, self-attention encoder, dense head."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .tensor import BatchNorm2d, Conv2d, DiffTensor, Dropout, LayerNorm, Linear, Module, ShapeError
from .tensor import functional as F
from .tensor.core import DEFAULT_DTYPE


@dataclass(frozen=True)
class CTConfig:
    n_features: int = 2
    signal_length: int = 280
    temporal_filters: int = 40
    temporal_kernel: int = 25
    pool_kernel: int = 75
    pool_stride: int = 15
    embed_dim: int = 40
    heads: int = 10
    attention_layers: int = 6
    ff_expansion: int = 4
    conv_dropout: float = 0.5
    dropout: float = 0.3
    dense_hidden: int = 256
    num_classes: int = 4

    def __post_init__(self):
        if self.n_features < 1:
            raise ValueError("n_features must be >= 1")
        if self.heads < 1 or self.embed_dim % self.heads:
            raise ValueError(f"heads ({self.heads}) must divide embed_dim ({self.embed_dim})")
        if self.conv_width < self.pool_kernel:
            raise ValueError(
                f"signal_length {self.signal_length} too short for temporal kernel "
                f"{self.temporal_kernel} and pooling window {self.pool_kernel}"
            )
        for name in ("conv_dropout", "dropout"):
            if not 0 <= getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in [0, 1)")

    @property
    def conv_width(self) -> int:
        return self.signal_length - self.temporal_kernel + 1

    @property
    def tokens(self) -> int:
        return (self.conv_width - self.pool_kernel) // self.pool_stride + 1

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads


def attention_weights(q: DiffTensor, k: DiffTensor) -> DiffTensor:
    """Row-stochastic ``softmax(q k^T / sqrt(d_k))`` over key positions."""
    d_k = q.shape[-1]
    scores = (q @ k.transpose(_swap_last(k.ndim))) * (1.0 / math.sqrt(d_k))
    return F.softmax(scores, axis=-1)


def attention(q: DiffTensor, k: DiffTensor, v: DiffTensor) -> DiffTensor:
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"attention shapes disagree: q {q.shape}, k {k.shape}, v {v.shape}")
    return attention_weights(q, k) @ v


def _swap_last(ndim: int):
    axes = list(range(ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return tuple(axes)


def split_heads(x: DiffTensor, heads: int) -> DiffTensor:
    N, T, d = x.shape
    return x.reshape(N, T, heads, d // heads).transpose(0, 2, 1, 3)


def merge_heads(x: DiffTensor) -> DiffTensor:
    N, h, T, dk = x.shape
    return x.transpose(0, 2, 1, 3).reshape(N, T, h * dk)


class MultiHeadAttention(Module):
    """Per-head projections are the column blocks of full-width query/key/value maps."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, dtype=DEFAULT_DTYPE):
        if heads < 1 or dim % heads:
            raise ValueError(f"heads ({heads}) must divide dim ({dim})")
        self.heads = heads
        self.query = Linear(dim, dim, rng, dtype)
        self.key = Linear(dim, dim, rng, dtype)
        self.value = Linear(dim, dim, rng, dtype)
        self.output = Linear(dim, dim, rng, dtype)

    def __call__(self, x: DiffTensor) -> DiffTensor:
        q = split_heads(self.query(x), self.heads)
        k = split_heads(self.key(x), self.heads)
        v = split_heads(self.value(x), self.heads)
        return self.output(merge_heads(attention(q, k, v)))


class EncoderBlock(Module):
    """Pre-norm residual attention and feed-forward sub-blocks."""

    def __init__(self, cfg: CTConfig, rng: np.random.Generator, drop_rng: np.random.Generator, dtype=DEFAULT_DTYPE):
        d = cfg.embed_dim
        self.norm1 = LayerNorm(d, dtype=dtype)
        self.attn = MultiHeadAttention(d, cfg.heads, rng, dtype)
        self.drop1 = Dropout(cfg.dropout, drop_rng)
        self.norm2 = LayerNorm(d, dtype=dtype)
        self.ff_in = Linear(d, d * cfg.ff_expansion, rng, dtype)
        self.ff_drop = Dropout(cfg.dropout, drop_rng)
        self.ff_out = Linear(d * cfg.ff_expansion, d, rng, dtype)
        self.drop2 = Dropout(cfg.dropout, drop_rng)

    def __call__(self, x: DiffTensor) -> DiffTensor:
        x = x + self.drop1(self.attn(self.norm1(x)))
        h = self.ff_out(self.ff_drop(F.elu(self.ff_in(self.norm2(x)))))
        return x + self.drop2(h)


class CTConvolution(Module):
    """Temporal conv → spatial conv → BN → ELU → avg-pool → dropout → 1×1 projection → tokens."""

    def __init__(self, cfg: CTConfig, rng: np.random.Generator, drop_rng: np.random.Generator, dtype=DEFAULT_DTYPE):
        self.cfg = cfg
        k = cfg.temporal_filters
        self.temporal = Conv2d(1, k, (1, cfg.temporal_kernel), rng=rng, dtype=dtype)
        self.spatial = Conv2d(k, k, (cfg.n_features, 1), rng=rng, dtype=dtype)
        self.norm = BatchNorm2d(k, dtype=dtype)
        self.drop = Dropout(cfg.conv_dropout, drop_rng)
        self.projection = Conv2d(k, cfg.embed_dim, (1, 1), rng=rng, dtype=dtype)

    def __call__(self, x: DiffTensor) -> DiffTensor:
        cfg = self.cfg
        if x.ndim != 4 or x.shape[1] != 1:
            raise ShapeError(f"CT stream expects N×1×F×T input, got {x.shape}")
        if x.shape[2] != cfg.n_features:
            raise ShapeError(f"CT stream built for {cfg.n_features} features, input has {x.shape[2]}")
        h = self.spatial(self.temporal(x))
        h = F.elu(self.norm(h))
        h = F.avg_pool2d(h, (1, cfg.pool_kernel), (1, cfg.pool_stride))
        h = self.projection(self.drop(h))          # N, d, 1, tokens
        N, d, _, tokens = h.shape
        return h.reshape(N, d, tokens).transpose(0, 2, 1)  # N, tokens, d


class CTStream(Module):
    def __init__(self, cfg: CTConfig, rng: np.random.Generator, drop_rng: Optional[np.random.Generator] = None,
                 dtype=DEFAULT_DTYPE, use_attention: bool = True):
        drop_rng = drop_rng if drop_rng is not None else np.random.default_rng(0)
        self.cfg = cfg
        self.use_attention = use_attention
        self.conv = CTConvolution(cfg, rng, drop_rng, dtype)
        self.blocks: List[EncoderBlock] = [EncoderBlock(cfg, rng, drop_rng, dtype) for _ in range(cfg.attention_layers)]
        self.fc1 = Linear(cfg.tokens * cfg.embed_dim, cfg.dense_hidden, rng, dtype)
        self.fc_drop = Dropout(cfg.dropout, drop_rng)
        self.fc2 = Linear(cfg.dense_hidden, cfg.num_classes, rng, dtype)

    def tokens(self, x: DiffTensor) -> DiffTensor:
        h = self.conv(x)
        if self.use_attention:
            for block in self.blocks:
                h = block(h)
        return h

    def __call__(self, x: DiffTensor) -> DiffTensor:
        """N×1×F×T signals → N×num_classes raw scores."""
        h = F.flatten(self.tokens(x))
        return self.fc2(self.fc_drop(F.elu(self.fc1(h))))
