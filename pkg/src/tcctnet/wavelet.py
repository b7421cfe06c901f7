"""Continuous wavelet transform with the complex Morlet wavelet.

Scales are expressed in samples, so a scale ``s`` maps to the wavelet
centre frequency ``C * sampling_rate / s`` Hz. Time and shift are in
seconds (sample index divided by the sampling rate) and the integral is a
Riemann sum with step ``1 / sampling_rate``. The wavelet is truncated where
its Gaussian envelope drops below ``SUPPORT_CUTOFF`` of the peak and the
signal is zero-extended beyond its ends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence, Tuple

import numpy as np
from scipy import fft as sfft

SUPPORT_CUTOFF = 1e-8


@dataclass(frozen=True)
class MorletParams:
    bandwidth: float = 1.0
    center_frequency: float = 1.0

    def __post_init__(self):
        if not (self.bandwidth > 0 and self.center_frequency > 0):
            raise ValueError(
                f"Morlet bandwidth and center frequency must be positive, got "
                f"B={self.bandwidth}, C={self.center_frequency}"
            )


@dataclass(frozen=True)
class ScaleGrid:
    scales: Tuple[float, ...]
    sampling_rate: float = 30.0

    def __post_init__(self):
        scales = tuple(float(s) for s in self.scales)
        object.__setattr__(self, "scales", scales)
        if not scales:
            raise ValueError("scale grid is empty")
        if any(s <= 0 for s in scales):
            raise ValueError("scales must be positive")
        if any(b <= a for a, b in zip(scales, scales[1:])):
            raise ValueError("scales must be strictly increasing")
        if self.sampling_rate <= 0:
            raise ValueError("sampling rate must be positive")

    @classmethod
    def geometric(cls, n_scales: int = 32, f_min: float = 0.1, f_max: float = 15.0,
                  sampling_rate: float = 30.0, center_frequency: float = 1.0) -> "ScaleGrid":
        """Geometric grid whose wavelet centre frequencies span [f_min, f_max] Hz."""
        if n_scales < 1 or not 0 < f_min <= f_max:
            raise ValueError("need n_scales >= 1 and 0 < f_min <= f_max")
        s_lo = center_frequency * sampling_rate / f_max
        s_hi = center_frequency * sampling_rate / f_min
        if n_scales == 1:
            return cls((s_lo,), sampling_rate)
        return cls(tuple(np.geomspace(s_lo, s_hi, n_scales)), sampling_rate)

    def __len__(self) -> int:
        return len(self.scales)

    def frequencies(self, params: MorletParams = MorletParams()) -> np.ndarray:
        return params.center_frequency * self.sampling_rate / np.asarray(self.scales)


@dataclass
class Scalogram:
    data: np.ndarray  # F x S x T, non-negative
    scale_grid: ScaleGrid
    feature_names: Sequence[str] = field(default_factory=list)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.data.shape


def morlet_sample(t, params: MorletParams = MorletParams()):
    """Complex Morlet wavelet ``(pi B)^-1/2 exp(-t^2/B) exp(2 pi i C t)``."""
    t = np.asarray(t, dtype=np.float64)
    B, C = params.bandwidth, params.center_frequency
    value = np.exp(-t * t / B) / math.sqrt(math.pi * B) * np.exp(2j * math.pi * C * t)
    return complex(value) if value.ndim == 0 else value


def support_halfwidth(scale: float, params: MorletParams = MorletParams()) -> int:
    """Largest lag (in samples) whose envelope is at least SUPPORT_CUTOFF of the peak."""
    return int(math.floor(scale * math.sqrt(params.bandwidth * math.log(1.0 / SUPPORT_CUTOFF))))


@lru_cache(maxsize=32)
def _kernel_spectra(scales: Tuple[float, ...], sampling_rate: float, params: MorletParams,
                    length: int) -> Tuple[np.ndarray, int]:
    """FFT of the lag-reversed, truncated, scaled conjugate wavelets."""
    n_fft = sfft.next_fast_len(2 * length - 1)
    lags = np.arange(-(length - 1), length)
    kernels = np.zeros((len(scales), 2 * length - 1), dtype=np.complex128)
    for k, s in enumerate(scales):
        hw = min(support_halfwidth(s, params), length - 1)
        sel = np.abs(lags) <= hw
        coef = 1.0 / math.sqrt(s * sampling_rate)  # 1/sqrt(s_seconds) * dt
        kernels[k, sel] = coef * np.conj(morlet_sample(lags[sel] / s, params))
    # reversed kernel turns the correlation into a convolution
    spectra = sfft.fft(kernels[:, ::-1], n=n_fft, axis=-1)
    spectra.setflags(write=False)
    return spectra, n_fft


def cwt_batch(signals: np.ndarray, grid: ScaleGrid, params: MorletParams = MorletParams(),
              chunk: int = 64) -> np.ndarray:
    """CWT of every row of ``signals`` (shape ``(..., T)``) → ``(..., S, T)`` complex."""
    x = np.asarray(signals, dtype=np.float64)
    if x.ndim < 1 or x.shape[-1] < 2:
        raise ValueError(f"signal must have at least 2 samples, got shape {x.shape}")
    if len(grid) == 0:
        raise ValueError("scale grid is empty")
    T = x.shape[-1]
    lead = x.shape[:-1]
    rows = x.reshape(-1, T)
    spectra, n_fft = _kernel_spectra(grid.scales, float(grid.sampling_rate), params, T)
    out = np.empty((rows.shape[0], len(grid), T), dtype=np.complex128)
    for start in range(0, rows.shape[0], chunk):
        block = sfft.fft(rows[start:start + chunk], n=n_fft, axis=-1)
        full = sfft.ifft(block[:, None, :] * spectra[None], axis=-1)
        out[start:start + chunk] = full[..., T - 1:2 * T - 1]
    return out.reshape(lead + (len(grid), T))


def cwt(signal: np.ndarray, grid: ScaleGrid, params: MorletParams = MorletParams()) -> np.ndarray:
    """CWT of a single 1-D signal → S×T complex coefficients."""
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1 or signal.size == 0:
        raise ValueError(f"cwt expects a non-empty 1-D signal, got shape {signal.shape}")
    return cwt_batch(signal, grid, params)


def magnitudes(signals: np.ndarray, grid: ScaleGrid, params: MorletParams = MorletParams()) -> np.ndarray:
    """Coefficient magnitudes for ``(..., F, T)`` input → ``(..., F, S, T)``."""
    return np.abs(cwt_batch(signals, grid, params))


def scalogram(matrix, grid: ScaleGrid, params: MorletParams = MorletParams()) -> Scalogram:
    """Stack per-feature CWT magnitudes of a signal matrix into an F×S×T array."""
    data = matrix.data if hasattr(matrix, "data") else matrix
    names = list(getattr(matrix, "feature_names", []))
    if isinstance(data, (list, tuple)):
        lengths = {len(row) for row in data}
        if len(lengths) > 1:
            raise ValueError(f"ragged signal rows with lengths {sorted(lengths)}")
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 1:
        raise ValueError(f"expected an F×T matrix, got shape {data.shape}")
    return Scalogram(magnitudes(data, grid, params), grid, names)
