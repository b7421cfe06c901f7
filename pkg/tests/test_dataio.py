import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcctnet.dataio import (
    DataError,
    Dataset,
    LabeledSample,
    SignalMatrix,
    label_index,
    load_dataset,
    normalize_length,
    standardize,
    write_manifest,
    write_sample_csv,
)


def test_trim_long_signal():
    raw = np.arange(300.0)[None, :]
    out = normalize_length(raw)
    np.testing.assert_array_equal(out, raw[:, :280])


def test_exact_length_is_identity():
    raw = np.random.default_rng(0).standard_normal((2, 280))
    np.testing.assert_array_equal(normalize_length(raw), raw)


def test_tiling_short_signal():
    out = normalize_length(np.arange(100.0)[None, :])
    np.testing.assert_array_equal(out[0], np.arange(280) % 100)


def test_empty_signal_rejected():
    with pytest.raises(DataError):
        normalize_length(np.zeros((2, 0)))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 400), st.integers(1, 3))
def test_normalize_idempotent_and_periodic(L, F):
    raw = np.random.default_rng(L).standard_normal((F, L))
    once = normalize_length(raw)
    assert once.shape == (F, 280)
    np.testing.assert_array_equal(normalize_length(once), once)
    if L < 280:
        np.testing.assert_array_equal(once, raw[:, np.arange(280) % L])


def test_label_names():
    assert label_index("Engaged") == 2
    assert label_index("Not-Engaged") == 0
    assert label_index("highly-engaged") == 3
    with pytest.raises(DataError):
        label_index("Sleepy")


def _write(tmp_path, rows, cols=("gaze_0_x", "pose_Ry", "pose_Rx"), length=300):
    rng = np.random.default_rng(1)
    manifest_rows = []
    for sid, label, split, n in rows:
        data = rng.standard_normal((len(cols), n if n is not None else length))
        write_sample_csv(tmp_path / f"{sid}.csv", cols, data)
        manifest_rows.append((sid, f"{sid}.csv", label, split))
    write_manifest(tmp_path / "manifest.csv", manifest_rows)
    return tmp_path / "manifest.csv"


def test_load_three_valid_rows_in_requested_order(tmp_path):
    m = _write(tmp_path, [("a", "Engaged", "train", None), ("b", "Not-Engaged", "train", None),
                          ("c", "Highly-Engaged", "val", 120)])
    ds = load_dataset(tmp_path, m, ["pose_Rx", "pose_Ry"])
    assert len(ds) == 3
    assert all(s.signals.data.shape == (2, 280) for s in ds.samples)
    assert [s.label for s in ds.samples] == [2, 0, 3]
    # order follows the request, not the file
    import csv
    with open(tmp_path / "a.csv") as fh:
        rows = list(csv.reader(fh))
    assert float(rows[1][2]) == ds.samples[0].signals.data[0, 0]  # pose_Rx is file column 2
    assert float(rows[1][1]) == ds.samples[0].signals.data[1, 0]


def test_load_empty_manifest(tmp_path):
    write_manifest(tmp_path / "m.csv", [])
    ds = load_dataset(tmp_path, tmp_path / "m.csv", ["pose_Rx"])
    assert len(ds) == 0


def test_missing_file_skipped(tmp_path, caplog):
    m = _write(tmp_path, [("a", "Engaged", "train", None)])
    with open(m, "a") as fh:
        fh.write("ghost,ghost.csv,Engaged,train\n")
    ds = load_dataset(tmp_path, m, ["pose_Rx"])
    assert len(ds) == 1
    assert "ghost" in caplog.text


def test_unknown_feature_and_label_rejected(tmp_path):
    m = _write(tmp_path, [("a", "Engaged", "train", None)])
    with pytest.raises(DataError):
        load_dataset(tmp_path, m, ["AU12_r"])
    m2 = _write(tmp_path, [("b", "Bored", "train", None)])
    with pytest.raises(DataError):
        load_dataset(tmp_path, m2, ["pose_Rx"])


def test_min_length_policy(tmp_path):
    m = _write(tmp_path, [("short_train", "Engaged", "train", 50), ("short_val", "Engaged", "val", 50)])
    ds = load_dataset(tmp_path, m, ["pose_Rx"])
    assert [s.signals.sample_id for s in ds.samples] == ["short_val"]


def test_missing_value_rejected(tmp_path):
    (tmp_path / "a.csv").write_text("pose_Rx\n0.1\n\n0.2\nnan_or_blank,\n")
    write_manifest(tmp_path / "m.csv", [("a", "a.csv", "Engaged", "val")])
    with pytest.raises(DataError):
        load_dataset(tmp_path, tmp_path / "m.csv", ["pose_Rx"])


def _ds(arr, split="train"):
    names = [f"f{i}" for i in range(arr.shape[1])]
    return Dataset([LabeledSample(SignalMatrix(a, names, str(i)), 0) for i, a in enumerate(arr)], split, names)


def test_standardize_train_and_val():
    rng = np.random.default_rng(2)
    train = rng.normal([[3.0], [-1.0]], [[2.0], [0.5]], size=(10, 2, 280))
    val = rng.normal([[5.0], [0.0]], [[2.0], [0.5]], size=(4, 2, 280))
    std_train, stats = standardize(_ds(train))
    x, _ = std_train.arrays()
    np.testing.assert_allclose(x.mean(axis=(0, 2)), 0, atol=1e-6)
    np.testing.assert_allclose(x.std(axis=(0, 2)), 1, atol=1e-6)
    std_val, _ = standardize(_ds(val, "val"), stats)
    xv, _ = std_val.arrays()
    assert abs(xv.mean(axis=(0, 2))[0]) > 0.5


def test_constant_feature_passes_through():
    arr = np.ones((3, 1, 280)) * 4.0
    out, stats = standardize(_ds(arr))
    np.testing.assert_array_equal(out.arrays()[0], arr)


def test_stats_feature_count_checked():
    arr = np.random.default_rng(3).standard_normal((3, 2, 280))
    _, stats = standardize(_ds(arr))
    with pytest.raises(DataError):
        standardize(_ds(arr[:, :1]), stats)
