"""Temporal-frequency stream: CWT scalogram front-end and a compact CNN."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .tensor import BatchNorm2d, Conv2d, DiffTensor, Dropout, Linear, Module, ShapeError
from .tensor import functional as F
from .tensor.core import DEFAULT_DTYPE
from .wavelet import MorletParams, ScaleGrid, magnitudes


@dataclass(frozen=True)
class TCConfig:
    n_features: int = 2
    signal_length: int = 280
    scale_grid: ScaleGrid = field(default_factory=ScaleGrid.geometric)
    morlet: MorletParams = field(default_factory=MorletParams)
    conv1_channels: int = 16
    conv1_kernel: int = 10
    pool: int = 15
    conv2_channels: int = 32
    conv2_height: int = 2
    dense_hidden: int = 64
    dropout: float = 0.3
    num_classes: int = 4

    def __post_init__(self):
        if self.n_features < 1:
            raise ValueError("n_features must be >= 1")
        if self.conv2_height > self.n_scales:
            raise ValueError(f"conv2 height {self.conv2_height} exceeds the {self.n_scales} scales")
        if self.pool > self.signal_length:
            raise ValueError(f"time pooling {self.pool} exceeds signal length {self.signal_length}")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")

    @property
    def n_scales(self) -> int:
        return len(self.scale_grid)

    @property
    def time_padding(self):
        """(left, right) zero padding that keeps the time length under conv1."""
        total = self.conv1_kernel - 1
        return total // 2, total - total // 2


def tc_transform(batch: Union[np.ndarray, Sequence], cfg: TCConfig, dtype=DEFAULT_DTYPE) -> DiffTensor:
    """Signals ``(N, F, T)`` (or a list of signal matrices) → ``N×F×S×T`` magnitudes, no gradient."""
    if isinstance(batch, np.ndarray):
        x = batch
    else:
        counts = {m.data.shape[0] for m in batch}
        if len(counts) > 1:
            raise ShapeError(f"mixed feature counts in batch: {sorted(counts)}")
        x = np.stack([m.data for m in batch])
    if x.ndim != 3:
        raise ShapeError(f"expected (N, F, T) signals, got shape {x.shape}")
    return DiffTensor(magnitudes(x, cfg.scale_grid, cfg.morlet).astype(dtype))


class TCStream(Module):
    def __init__(self, cfg: TCConfig, rng: np.random.Generator, drop_rng: Optional[np.random.Generator] = None,
                 dtype=DEFAULT_DTYPE):
        drop_rng = drop_rng if drop_rng is not None else np.random.default_rng(0)
        self.cfg = cfg
        self.conv1 = Conv2d(cfg.n_features, cfg.conv1_channels, (1, cfg.conv1_kernel), rng=rng, dtype=dtype)
        self.norm1 = BatchNorm2d(cfg.conv1_channels, dtype=dtype)
        self.conv2 = Conv2d(cfg.conv1_channels, cfg.conv2_channels, (cfg.conv2_height, 1), rng=rng, dtype=dtype)
        self.norm2 = BatchNorm2d(cfg.conv2_channels, dtype=dtype)
        self.adjust = Linear(cfg.conv2_channels, cfg.dense_hidden, rng, dtype)
        self.fc1 = Linear(cfg.dense_hidden, cfg.dense_hidden, rng, dtype)
        self.fc_drop = Dropout(cfg.dropout, drop_rng)
        self.fc2 = Linear(cfg.dense_hidden, cfg.num_classes, rng, dtype)

    def features(self, x: DiffTensor) -> DiffTensor:
        """Convolutional trunk up to global average pooling: N×conv2_channels."""
        cfg = self.cfg
        if x.ndim != 4 or x.shape[1] != cfg.n_features:
            raise ShapeError(f"TC stream built for {cfg.n_features} feature channels, input shape {x.shape}")
        left, right = cfg.time_padding
        h = self.conv1(F.pad2d(x, 0, 0, left, right))
        h = F.elu(self.norm1(h))
        h = F.avg_pool2d(h, (1, cfg.pool), (1, cfg.pool))
        h = F.elu(self.norm2(self.conv2(h)))
        return h.mean(axis=(2, 3))

    def __call__(self, x: DiffTensor) -> DiffTensor:
        """N×F×S×T scalograms → N×num_classes raw scores."""
        h = F.elu(self.adjust(self.features(x)))
        return self.fc2(self.fc_drop(F.elu(self.fc1(h))))
