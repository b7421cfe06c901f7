import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcctnet.wavelet import (
    MorletParams,
    ScaleGrid,
    cwt,
    morlet_sample,
    scalogram,
    support_halfwidth,
)


def riemann_cwt(x, grid, params):
    """Untruncated Riemann sum of the CWT integral, one coefficient at a time."""
    fs = grid.sampling_rate
    t = np.arange(len(x)) / fs
    out = np.zeros((len(grid), len(x)), dtype=complex)
    for k, s_samples in enumerate(grid.scales):
        s = s_samples / fs
        for n in range(len(x)):
            tau = n / fs
            u = (t - tau) / s
            psi = np.exp(-u * u / params.bandwidth) / math.sqrt(math.pi * params.bandwidth) \
                * np.exp(2j * math.pi * params.center_frequency * u)
            out[k, n] = np.sum(x * np.conj(psi)) / fs / math.sqrt(s)
    return out


def rel_err(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_morlet_at_zero():
    p = MorletParams(bandwidth=1.7, center_frequency=0.8)
    v = morlet_sample(0.0, p)
    assert v.real == pytest.approx(1 / math.sqrt(math.pi * 1.7), rel=1e-15)
    assert v.imag == 0.0


def test_morlet_quarter_period():
    v = morlet_sample(0.25, MorletParams(1.0, 1.0))
    assert abs(v) == pytest.approx(math.exp(-1 / 16) / math.sqrt(math.pi), rel=1e-14)
    assert cmath.phase(v) == pytest.approx(math.pi / 2, rel=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.floats(-6, 6), st.floats(0.2, 4), st.floats(0.2, 4))
def test_morlet_modulus_is_even(t, b, c):
    p = MorletParams(b, c)
    assert abs(morlet_sample(t, p)) == pytest.approx(abs(morlet_sample(-t, p)), rel=1e-12)


def test_params_validation():
    with pytest.raises(ValueError):
        MorletParams(0.0, 1.0)
    with pytest.raises(ValueError):
        ScaleGrid((2.0, 1.0))
    with pytest.raises(ValueError):
        ScaleGrid(())


def test_default_grid_spans_band():
    grid = ScaleGrid.geometric()
    f = grid.frequencies()
    assert len(grid) == 32
    assert f[0] == pytest.approx(15.0) and f[-1] == pytest.approx(0.1)


def test_zero_signal():
    assert np.all(cwt(np.zeros(50), ScaleGrid.geometric(8)) == 0)


def test_empty_inputs_rejected():
    with pytest.raises(ValueError):
        cwt(np.zeros(0), ScaleGrid.geometric(4))


def test_matches_riemann_oracle_small():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(64)
    grid = ScaleGrid.geometric(8, f_min=0.5, f_max=12.0)
    p = MorletParams()
    assert rel_err(cwt(x, grid, p), riemann_cwt(x, grid, p)) < 1e-6


def test_matches_riemann_oracle_non_unit_params():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(90)
    grid = ScaleGrid.geometric(6, sampling_rate=25.0)
    p = MorletParams(bandwidth=2.0, center_frequency=1.5)
    assert rel_err(cwt(x, grid, p), riemann_cwt(x, grid, p)) < 1e-6


@pytest.mark.parametrize("f", [1.0, 2.0, 3.0, 5.0, 8.0])
def test_cosine_peak_scale(f):
    fs, T = 30.0, 280
    grid = ScaleGrid.geometric(32, sampling_rate=fs)
    x = np.cos(2 * np.pi * f * np.arange(T) / fs)
    peak = int(np.argmax(np.abs(cwt(x, grid)).mean(axis=1)))
    predicted = int(np.argmin(np.abs(np.asarray(grid.scales) - 1.0 * fs / f)))
    assert abs(peak - predicted) <= 1


def test_linearity():
    rng = np.random.default_rng(2)
    x, y = rng.standard_normal((2, 120))
    grid = ScaleGrid.geometric(10)
    lhs = cwt(2.5 * x - 0.7 * y, grid)
    rhs = 2.5 * cwt(x, grid) - 0.7 * cwt(y, grid)
    assert np.max(np.abs(lhs - rhs)) < 1e-8


def test_time_shift_covariance():
    rng = np.random.default_rng(3)
    T, d = 280, 7
    grid = ScaleGrid.geometric(8, f_min=2.0)
    x = rng.standard_normal(T)
    shifted = np.concatenate([np.zeros(d), x[:-d]])
    a, b = cwt(x, grid), cwt(shifted, grid)
    hw = max(support_halfwidth(s) for s in grid.scales)
    lo, hi = hw, T - hw
    assert hi - lo > 2 * d
    np.testing.assert_allclose(b[:, lo + d:hi], a[:, lo:hi - d], atol=1e-6, rtol=0)


def test_scalogram_shapes_and_properties():
    rng = np.random.default_rng(4)
    row = rng.standard_normal(280)
    grid = ScaleGrid.geometric(32)

    class M:
        data = np.stack([row, row])
        feature_names = ["pose_Rx", "pose_Ry"]

    sc = scalogram(M, grid)
    assert sc.shape == (2, 32, 280)
    assert np.array_equal(sc.data[0], sc.data[1])
    assert np.all(sc.data >= 0)
    doubled = scalogram(2 * M.data, grid)
    np.testing.assert_array_equal(doubled.data, 2 * sc.data)


def test_scalogram_rejects_ragged():
    with pytest.raises(ValueError):
        scalogram([[1.0, 2.0, 3.0], [1.0, 2.0]], ScaleGrid.geometric(4))
