"""Loading and preparing behavioral feature signals.

Input layout: a manifest CSV with the exact header ``sample_id,path,label,split``
and one CSV per sample whose header names the feature columns (OpenFace style,
one row per frame). Paths in the manifest are resolved relative to the data
root.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

SIGNAL_LENGTH = 280
MIN_TRAIN_LENGTH = 84  # 30% of SIGNAL_LENGTH
CLASS_NAMES = ("Not-Engaged", "Barely-Engaged", "Engaged", "Highly-Engaged")
MANIFEST_HEADER = ("sample_id", "path", "label", "split")
SPLITS = ("train", "val", "test")


class DataError(ValueError):
    """Malformed or missing input data."""


class FeatureError(DataError):
    """Requested feature columns are absent or disagree with a model."""


@dataclass
class SignalMatrix:
    data: np.ndarray  # F x T
    feature_names: List[str]
    sample_id: str = ""

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise DataError(f"signal matrix must be 2-D, got shape {self.data.shape}")
        if len(self.feature_names) != self.data.shape[0]:
            raise DataError(
                f"{len(self.feature_names)} feature names for {self.data.shape[0]} rows"
            )
        if not np.all(np.isfinite(self.data)):
            raise DataError(f"sample {self.sample_id!r} contains non-finite values")

    @property
    def n_features(self) -> int:
        return self.data.shape[0]

    @property
    def length(self) -> int:
        return self.data.shape[1]


@dataclass
class LabeledSample:
    signals: SignalMatrix
    label: int

    def __post_init__(self):
        if self.label not in range(len(CLASS_NAMES)):
            raise DataError(f"label {self.label} outside 0..{len(CLASS_NAMES) - 1}")


@dataclass
class Dataset:
    samples: List[LabeledSample] = field(default_factory=list)
    split: str = "train"
    feature_selection: List[str] = field(default_factory=list)

    def __post_init__(self):
        lengths = {s.signals.length for s in self.samples}
        if len(lengths) > 1:
            raise DataError(f"samples have differing lengths {sorted(lengths)}")
        for s in self.samples:
            if list(s.signals.feature_names) != list(self.feature_selection):
                raise DataError(
                    f"sample {s.signals.sample_id!r} features {s.signals.feature_names} "
                    f"differ from dataset selection {self.feature_selection}"
                )

    def __len__(self) -> int:
        return len(self.samples)

    def arrays(self, dtype=np.float64) -> Tuple[np.ndarray, np.ndarray]:
        """Stacked signals ``(N, F, T)`` and labels ``(N,)``."""
        if not self.samples:
            return np.zeros((0, len(self.feature_selection), SIGNAL_LENGTH), dtype=dtype), np.zeros(0, dtype=np.int64)
        x = np.stack([s.signals.data for s in self.samples]).astype(dtype)
        y = np.array([s.label for s in self.samples], dtype=np.int64)
        return x, y


def label_index(name: str) -> int:
    """Map a class name (case-insensitive) or its integer index to the class index."""
    key = name.strip()
    for i, cls in enumerate(CLASS_NAMES):
        if key.lower() == cls.lower():
            return i
    if key.isdigit() and int(key) < len(CLASS_NAMES):
        return int(key)
    raise DataError(f"unknown label {name!r}; expected one of {', '.join(CLASS_NAMES)}")


def normalize_length(raw: np.ndarray, target: int = SIGNAL_LENGTH) -> np.ndarray:
    """Trim to the first ``target`` columns, or tile end-to-end and cut the excess."""
    raw = np.asarray(raw)
    if raw.ndim == 1:
        raw = raw[None, :]
    L = raw.shape[1]
    if L == 0:
        raise DataError("cannot normalize an empty signal")
    if L >= target:
        return raw[:, :target].copy()
    reps = math.ceil(target / L)
    return np.tile(raw, (1, reps))[:, :target]


def read_sample_csv(path: Path, features: Sequence[str]) -> np.ndarray:
    """Read the requested feature columns of one sample file as an F×L array."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        missing = [f for f in features if f not in header]
        if missing:
            raise FeatureError(f"{path}: unknown feature(s) {missing}; available: {header}")
        cols = [header.index(f) for f in features]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                values = [float(row[c]) for c in cols]
            except (IndexError, ValueError):
                raise DataError(f"{path}:{lineno}: missing or non-numeric value") from None
            rows.append(values)
    data = np.array(rows, dtype=np.float64).reshape(-1, len(features)).T
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: non-finite values")
    return data


def read_manifest(manifest: Path) -> List[Dict[str, str]]:
    with open(manifest, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = tuple(h.strip() for h in next(reader))
        except StopIteration:
            return []
        if header != MANIFEST_HEADER:
            raise DataError(f"{manifest}: header must be {','.join(MANIFEST_HEADER)}, got {','.join(header)}")
        rows = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(MANIFEST_HEADER):
                raise DataError(f"{manifest}: malformed row {row}")
            rows.append(dict(zip(MANIFEST_HEADER, (v.strip() for v in row))))
    return rows


def load_dataset(root, manifest, features: Sequence[str], split: Optional[str] = None,
                 target: int = SIGNAL_LENGTH, min_train_length: int = MIN_TRAIN_LENGTH) -> Dataset:
    """Load every manifest row (optionally one split) into a length-normalized Dataset.

    Rows whose sample file is missing are skipped with a warning, as are
    training rows shorter than ``min_train_length`` frames. Unknown feature
    names and unknown labels raise :class:`DataError`.
    """
    root = Path(root)
    manifest = Path(manifest)
    if not manifest.is_file():
        raise DataError(f"manifest not found: {manifest}")
    features = list(features)
    if not features:
        raise DataError("no features selected")
    samples = []
    for row in read_manifest(manifest):
        if split is not None and row["split"] != split:
            continue
        label = label_index(row["label"])
        path = root / row["path"]
        if not path.is_file():
            logger.warning("skipping %s: file %s not found", row["sample_id"], path)
            continue
        raw = read_sample_csv(path, features)
        if raw.shape[1] == 0:
            logger.warning("skipping %s: no frames", row["sample_id"])
            continue
        if row["split"] == "train" and raw.shape[1] < min_train_length:
            logger.warning("skipping %s: %d frames < %d minimum for training",
                           row["sample_id"], raw.shape[1], min_train_length)
            continue
        matrix = SignalMatrix(normalize_length(raw, target), features, row["sample_id"])
        samples.append(LabeledSample(matrix, label))
    return Dataset(samples, split or "all", features)


@dataclass(frozen=True)
class FeatureStats:
    mean: Tuple[float, ...]
    std: Tuple[float, ...]

    def to_dict(self) -> dict:
        return {"mean": list(self.mean), "std": list(self.std)}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureStats":
        return cls(tuple(d["mean"]), tuple(d["std"]))


STD_FLOOR = 1e-8


def compute_stats(dataset: Dataset) -> FeatureStats:
    x, _ = dataset.arrays()
    if x.shape[0] == 0:
        raise DataError("cannot compute statistics of an empty dataset")
    mean = x.mean(axis=(0, 2))
    std = x.std(axis=(0, 2))
    return FeatureStats(tuple(mean), tuple(std))


def apply_stats(data: np.ndarray, stats: FeatureStats) -> np.ndarray:
    """Standardize an ``(..., F, T)`` array; near-constant features pass through."""
    mean = np.asarray(stats.mean)[:, None]
    std = np.asarray(stats.std)[:, None]
    scaled = (data - mean) / np.where(std < STD_FLOOR, 1.0, std)
    return np.where(std < STD_FLOOR, data, scaled)


def standardize(dataset: Dataset, stats: Optional[FeatureStats] = None) -> Tuple[Dataset, FeatureStats]:
    """Per-feature (x - mean) / std, using ``stats`` if given else the dataset's own."""
    if stats is None:
        stats = compute_stats(dataset)
    elif len(stats.mean) != len(dataset.feature_selection):
        raise DataError(
            f"statistics cover {len(stats.mean)} features, dataset has {len(dataset.feature_selection)}"
        )
    samples = [
        LabeledSample(replace(s.signals, data=apply_stats(s.signals.data, stats)), s.label)
        for s in dataset.samples
    ]
    return Dataset(samples, dataset.split, list(dataset.feature_selection)), stats


def write_sample_csv(path: Path, feature_names: Sequence[str], data: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(feature_names)
        for frame in np.asarray(data).T:
            w.writerow([repr(float(v)) for v in frame])


def write_manifest(path: Path, rows: Sequence[Tuple[str, str, str, str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(MANIFEST_HEADER)
        w.writerows(rows)
