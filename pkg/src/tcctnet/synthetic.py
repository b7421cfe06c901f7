"""Synthetic labeled signal sets with class-specific dominant frequencies."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dataio import (
    CLASS_NAMES,
    SIGNAL_LENGTH,
    Dataset,
    LabeledSample,
    SignalMatrix,
    write_manifest,
    write_sample_csv,
)

DEFAULT_FREQUENCIES = (0.5, 1.2, 2.5, 4.5)
DEFAULT_FEATURES = ("pose_Rx", "pose_Ry")


def frequency_signals(labels: np.ndarray, rng: np.random.Generator,
                      frequencies: Sequence[float] = DEFAULT_FREQUENCIES, noise: float = 0.5,
                      n_features: int = 2, length: int = SIGNAL_LENGTH,
                      sampling_rate: float = 30.0) -> np.ndarray:
    """``(N, F, T)`` signals: a random-phase sinusoid at the class frequency per channel plus noise."""
    labels = np.asarray(labels)
    t = np.arange(length) / sampling_rate
    freq = np.asarray(frequencies)[labels][:, None, None]
    # small per-sample frequency jitter keeps the classes from being single tones
    freq = freq * rng.uniform(0.92, 1.08, size=(len(labels), 1, 1))
    phase = rng.uniform(0, 2 * np.pi, size=(len(labels), n_features, 1))
    amp = rng.uniform(0.7, 1.3, size=(len(labels), n_features, 1))
    x = amp * np.sin(2 * np.pi * freq * t[None, None, :] + phase)
    return x + noise * rng.standard_normal(x.shape)


def make_dataset(n: int, seed: int = 0, split: str = "train",
                 frequencies: Sequence[float] = DEFAULT_FREQUENCIES, noise: float = 0.5,
                 features: Sequence[str] = DEFAULT_FEATURES, balanced: bool = True) -> Dataset:
    rng = np.random.default_rng(seed)
    k = len(frequencies)
    if balanced:
        labels = np.arange(n) % k
        rng.shuffle(labels)
    else:
        labels = rng.integers(0, k, size=n)
    x = frequency_signals(labels, rng, frequencies, noise, len(features))
    samples = [
        LabeledSample(SignalMatrix(x[i], list(features), f"{split}_{i:05d}"), int(labels[i]))
        for i in range(n)
    ]
    return Dataset(samples, split, list(features))


def write_corpus(root, n_train: int = 64, n_val: int = 16, seed: int = 0, noise: float = 0.5,
                 features: Sequence[str] = DEFAULT_FEATURES, extra_columns: Optional[Sequence[str]] = None,
                 length: Optional[int] = None) -> Path:
    """Write sample CSVs and ``manifest.csv`` under ``root``; returns the manifest path.

    ``extra_columns`` adds noise-only columns (placed first) so that column
    selection by name is exercised.
    """
    root = Path(root)
    extra = list(extra_columns or [])
    rows = []
    for split, n, offset in (("train", n_train, 0), ("val", n_val, 1)):
        ds = make_dataset(n, seed + offset, split, noise=noise, features=features)
        rng = np.random.default_rng(seed + 100 + offset)
        for s in ds.samples:
            data = s.signals.data if length is None else s.signals.data[:, :length]
            cols = list(extra) + list(features)
            block = np.vstack([rng.standard_normal((len(extra), data.shape[1])), data])
            rel = f"{split}/{s.signals.sample_id}.csv"
            write_sample_csv(root / rel, cols, block)
            rows.append((s.signals.sample_id, rel, CLASS_NAMES[s.label], split))
    manifest = root / "manifest.csv"
    write_manifest(manifest, rows)
    return manifest
