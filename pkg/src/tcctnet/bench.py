"""Latency benchmark: per-sample inference, whole-split inference and one training epoch.

Timings start from in-memory signal arrays, so file parsing is never counted.
The wavelet transform is timed separately from the network forward pass.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from threadpoolctl import threadpool_limits

from .fusion import predict
from .model import TCCTNet
from .tensor import functional as F
from .trainer import TrainConfig, train

BENCH_HEADER = ("warmup", "iters", "mean_ms", "p50_ms", "p95_ms", "transform_mean_ms", "forward_mean_ms",
                "split_samples", "split_seconds", "split_transform_seconds", "epoch_train_seconds")


@dataclass
class BenchReport:
    warmup: int
    iters: int
    mean_ms: float
    p50_ms: float
    p95_ms: float
    transform_mean_ms: float
    forward_mean_ms: float
    split_samples: int
    split_seconds: float
    split_transform_seconds: float
    epoch_train_seconds: Optional[float] = None

    def lines(self):
        yield f"per-sample latency over {self.iters} runs ({self.warmup} warmup):"
        yield f"  mean {self.mean_ms:.2f} ms   p50 {self.p50_ms:.2f} ms   p95 {self.p95_ms:.2f} ms"
        yield f"  transform {self.transform_mean_ms:.2f} ms   forward+fusion {self.forward_mean_ms:.2f} ms"
        yield (f"split inference: {self.split_samples} samples in {self.split_seconds:.3f} s "
               f"(transform {self.split_transform_seconds:.3f} s)")
        if self.epoch_train_seconds is not None:
            yield f"training epoch: {self.epoch_train_seconds:.3f} s"

    def write_csv(self, path) -> None:
        row = asdict(self)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(BENCH_HEADER)
            w.writerow(["" if row[k] is None else row[k] for k in BENCH_HEADER])


def _forward(model: TCCTNet, x: np.ndarray, sc: Optional[np.ndarray]) -> np.ndarray:
    return F.softmax(model(x, sc), axis=-1).values


def time_sample(model: TCCTNet, x1: np.ndarray):
    """Seconds spent on (transform, forward + fusion) for one ``(1, F, T)`` input in eval mode."""
    t0 = time.perf_counter()
    sc = model.scalograms(x1) if model.ablation.uses_tc else None
    t1 = time.perf_counter()
    _forward(model, x1, sc)
    t2 = time.perf_counter()
    return t1 - t0, t2 - t1


def split_inference(model: TCCTNet, x: np.ndarray, batch_size: int = 256, workers: int = 1):
    """Batched inference over a whole split; returns (predictions, total seconds, transform seconds)."""
    chunks = [x[i:i + batch_size] for i in range(0, len(x), batch_size)]

    def run(chunk):
        t0 = time.perf_counter()
        sc = model.scalograms(chunk) if model.ablation.uses_tc else None
        t1 = time.perf_counter()
        return _forward(model, chunk, sc), t1 - t0

    start = time.perf_counter()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(c) for c in chunks]
    total = time.perf_counter() - start
    probs = np.concatenate([r[0] for r in results])
    return predict(probs), total, sum(r[1] for r in results)


def run_bench(model: TCCTNet, x: np.ndarray, y: Optional[np.ndarray] = None, warmup: int = 5, iters: int = 100,
              workers: int = 1, train_epoch: bool = True, threads: Optional[int] = 1) -> BenchReport:
    """Benchmark ``model`` on signals ``x`` (N, F, T); ``threads`` caps BLAS threads (None leaves them alone)."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if warmup < 0:
        raise ValueError("warmup must be >= 0")
    if len(x) == 0:
        raise ValueError("benchmark needs at least one sample")
    x = np.asarray(x, dtype=model.dtype)
    limits = threadpool_limits(threads) if threads else None
    was_training = model.training
    try:
        model.eval()
        for i in range(warmup):
            time_sample(model, x[i % len(x)][None])
        transform, forward = np.zeros(iters), np.zeros(iters)
        for i in range(iters):
            transform[i], forward[i] = time_sample(model, x[i % len(x)][None])
        total_ms = 1000 * (transform + forward)
        _, split_s, split_tr = split_inference(model, x, workers=workers)
        epoch_s = None
        if train_epoch and y is not None:
            epoch_s = _epoch_seconds(model, x, y)
    finally:
        model.train(was_training)
        if limits is not None:
            limits.restore_original_limits()
    return BenchReport(warmup, iters, float(total_ms.mean()), float(np.percentile(total_ms, 50)),
                       float(np.percentile(total_ms, 95)), float(1000 * transform.mean()),
                       float(1000 * forward.mean()), len(x), split_s, split_tr, epoch_s)


def _epoch_seconds(model: TCCTNet, x: np.ndarray, y: np.ndarray) -> float:
    """Wall time of one training epoch (including its validation pass) on a throwaway copy of ``model``."""
    clone = TCCTNet.from_config_dict(model.config_dict())
    clone.load_state_dict(model.state_dict())
    _, report = train((x, y), (x, y), clone, TrainConfig(max_epochs=1, ablation=model.ablation))
    return report.seconds[0]

