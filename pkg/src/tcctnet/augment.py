"""Segmentation-and-recombination (S&R) augmentation.

Each synthetic sample is assembled segment by segment: for segment position
``j`` a donor is drawn uniformly (with replacement) from the same-class
members of the batch and its ``j``-th segment is copied, all feature rows
together. Segments never change position.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .dataio import SIGNAL_LENGTH, LabeledSample, SignalMatrix


@dataclass(frozen=True)
class SRConfig:
    segments: int = 4
    rng_seed: int = 0
    length: int = SIGNAL_LENGTH

    def __post_init__(self):
        if self.segments < 1 or self.length % self.segments:
            raise ValueError(f"segments must be >= 1 and divide {self.length}, got {self.segments}")

    @property
    def segment_length(self) -> int:
        return self.length // self.segments


def donor_table(labels: np.ndarray, segments: int, rng: np.random.Generator) -> np.ndarray:
    """``(N, segments)`` batch indices: row i lists the donor of each segment of synthetic i."""
    labels = np.asarray(labels)
    donors = np.empty((len(labels), segments), dtype=np.int64)
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        picks = rng.integers(0, len(members), size=(len(members), segments))
        donors[members] = members[picks]
    return donors


def recombine(x: np.ndarray, donors: np.ndarray) -> np.ndarray:
    """Assemble ``(N, F, T)`` synthetic signals from a donor table."""
    N, _, T = x.shape
    segments = donors.shape[1]
    seg = T // segments
    out = np.empty_like(x)
    for j in range(segments):
        sl = slice(j * seg, (j + 1) * seg)
        out[:, :, sl] = x[donors[:, j], :, sl]
    return out


def sr_augment_arrays(x: np.ndarray, labels: np.ndarray, segments: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Array form of :func:`sr_augment`; labels of the output equal ``labels``."""
    if x.ndim != 3 or x.shape[0] != len(labels):
        raise ValueError(f"expected (N, F, T) signals matching {len(labels)} labels, got {x.shape}")
    if x.shape[-1] % segments:
        raise ValueError(f"signal length {x.shape[-1]} is not divisible by {segments} segments")
    return recombine(x, donor_table(labels, segments, rng))


def sr_augment(batch: List[LabeledSample], config: SRConfig,
               rng: Optional[np.random.Generator] = None) -> List[LabeledSample]:
    """Return one synthetic sample per batch member, with the member's label."""
    if not batch:
        raise ValueError("cannot augment an empty batch")
    for s in batch:
        if s.signals.length != config.length:
            raise ValueError(
                f"sample {s.signals.sample_id!r} has length {s.signals.length}, expected {config.length}"
            )
    rng = rng if rng is not None else np.random.default_rng(config.rng_seed)
    x = np.stack([s.signals.data for s in batch])
    labels = np.array([s.label for s in batch])
    synth = sr_augment_arrays(x, labels, config.segments, rng)
    return [
        LabeledSample(SignalMatrix(synth[i], list(s.signals.feature_names), f"{s.signals.sample_id}+sr"), s.label)
        for i, s in enumerate(batch)
    ]
