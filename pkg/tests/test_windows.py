import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from prefall.errors import ConfigError, ExtractionError, FormatVersionError, MaskedDataError
from prefall.features import FeatureSequence
from prefall.ingest import Label
from prefall.windows import (
    StratificationWarning,
    WindowSample,
    build_windows,
    collate_split,
    derive_seed,
    extract_fall_window,
    extract_nonfall_window,
    feature_stats,
    lead_frames,
    read_dataset,
    valid_starts,
    write_dataset,
    write_stats_csv,
)


def fseq(n, label=Label.NONFALL, impact=None, fps=18.0, sid="s", start=0, valid=None, subject=""):
    theta = np.arange(n * 6, dtype=float).reshape(n, 6)
    v = np.ones((n, 6), bool) if valid is None else valid
    return FeatureSequence(sid, np.arange(start, start + n), theta, v, label, impact, fps, subject)


def sample(label, i, subject=""):
    return WindowSample(np.full((3, 6), float(i)), label, f"q{i}", i, subject_id=subject)


def test_fall_window_example():
    w = extract_fall_window(fseq(120, Label.FALL, 100), 0.5, 15)
    assert w.window_start == 77
    assert w.features[0, 0] == 77 * 6 and w.features[-1, 0] == 91 * 6
    assert w.K == 15 and w.label is Label.FALL and w.lead_time_s == 0.5


def test_zero_lead_single_frame():
    w = extract_fall_window(fseq(120, Label.FALL, 100), 0.0, 1)
    assert w.window_start == 100 and w.K == 1


def test_fall_window_respects_frame_index_offset():
    w = extract_fall_window(fseq(50, Label.FALL, 120, start=100), 0.5, 5)
    assert w.window_start == 107


@pytest.mark.parametrize(
    "fs, lead, K, err",
    [
        (fseq(120, Label.FALL, 10), 0.5, 15, ExtractionError),
        (fseq(120, Label.NONFALL), 0.5, 15, ExtractionError),
        (fseq(120, Label.FALL, 100), 0.5, 0, ConfigError),
        (fseq(120, Label.FALL, 100), -0.1, 5, ConfigError),
    ],
)
def test_fall_window_errors(fs, lead, K, err):
    with pytest.raises(err):
        extract_fall_window(fs, lead, K)


def test_fall_window_masked():
    valid = np.ones((120, 6), bool)
    valid[80, 2] = False
    with pytest.raises(MaskedDataError):
        extract_fall_window(fseq(120, Label.FALL, 100, valid=valid), 0.5, 15)


def test_fall_window_gap_in_frames():
    theta = np.zeros((10, 6))
    fi = np.array([0, 1, 2, 3, 5, 6, 7, 8, 9, 10])
    fs = FeatureSequence("g", fi, theta, np.ones((10, 6), bool), Label.FALL, 10)
    with pytest.raises(ExtractionError):
        extract_fall_window(fs, 0.0, 8)


@pytest.mark.parametrize("lead, fps, frames", [(0.5, 18, 9), (0.1, 18, 2), (0.25, 18, 5), (0.3, 30, 9), (0.05, 30, 2), (0, 18, 0)])
def test_lead_frames(lead, fps, frames):
    assert lead_frames(lead, fps) == frames


@given(st.integers(1, 80), st.integers(0, 40), st.integers(1, 30), st.sampled_from([18.0, 25.0, 30.0]))
def test_lead_arithmetic(lead_ms, impact_gap, K, fps):
    lead = lead_ms / 100
    lf = lead_frames(lead, fps)
    assert lf == int(Fraction(str(lead)) * Fraction(str(fps)) + Fraction(1, 2))
    impact = lf + K + impact_gap
    w = extract_fall_window(fseq(impact + 1, Label.FALL, impact, fps=fps), lead, K)
    assert w.window_start + K - 1 == impact - lf


def test_nonfall_short_sequence():
    with pytest.raises(ExtractionError):
        extract_nonfall_window(fseq(5), 6, 0)


def test_nonfall_no_valid_window():
    valid = np.ones((10, 6), bool)
    valid[::3, 0] = False
    with pytest.raises(MaskedDataError):
        extract_nonfall_window(fseq(10, valid=valid), 4, 0)


def test_nonfall_starts_uniform():
    fs = fseq(24)  # K 15 -> 10 valid starts
    assert valid_starts(fs, 15).tolist() == list(range(10))
    counts = np.zeros(10)
    for seed in range(10000):
        counts[extract_nonfall_window(fs, 15, seed).window_start] += 1
    freq = counts / counts.sum()
    assert np.all(np.abs(freq - 0.1) <= 0.02), freq


def test_nonfall_only_valid_starts():
    valid = np.ones((30, 6), bool)
    valid[10] = False
    fs = fseq(30, valid=valid)
    starts = {extract_nonfall_window(fs, 5, s).window_start for s in range(500)}
    assert starts == set(range(0, 6)) | set(range(11, 26))


def test_build_windows_skips_and_is_deterministic():
    seqs = [fseq(120, Label.FALL, 100, sid="f"), fseq(120, Label.FALL, 5, sid="bad"), fseq(40, sid="n")]
    a, skipped = build_windows(seqs, 0.5, 15, seed=3)
    b, _ = build_windows(seqs, 0.5, 15, seed=3)
    assert [w.key for w in a] == [w.key for w in b]
    assert [sid for sid, _ in skipped] == ["bad"]
    assert derive_seed(3, "n") == derive_seed(3, "n") != derive_seed(4, "n")


def test_split_ten_windows():
    samples = [sample(Label.FALL if i < 5 else Label.NONFALL, i) for i in range(10)]
    split = collate_split(samples, 0.8, seed=1)
    assert (len(split.train), len(split.test)) == (8, 2)
    assert sorted(w.label.value for w in split.test) == [0, 1]


def test_split_single_class_member_warns():
    samples = [sample(Label.FALL, 0)] + [sample(Label.NONFALL, i) for i in range(1, 10)]
    with pytest.warns(StratificationWarning):
        split = collate_split(samples, 0.8, seed=0)
    assert (len(split.train), len(split.test)) == (8, 2)


def test_split_stratified_counts():
    samples = [sample(Label.FALL, i) for i in range(4)] + [sample(Label.NONFALL, i) for i in range(4, 8)]
    split = collate_split(samples, 0.8, seed=5)
    for lab in Label:
        assert sum(w.label is lab for w in split.train) == 3
        assert sum(w.label is lab for w in split.test) == 1


@given(st.integers(2, 40), st.integers(2, 40), st.integers(0, 2**31), st.sampled_from([0.5, 0.7, 0.8, 0.9]))
def test_split_partition_properties(nf, nn, seed, ratio):
    samples = [sample(Label.FALL, i) for i in range(nf)] + [sample(Label.NONFALL, nf + i) for i in range(nn)]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        a = collate_split(samples, ratio, seed)
    b = collate_split(samples, ratio, seed)
    keys_a = [w.key for w in a.train], [w.key for w in a.test]
    assert keys_a == ([w.key for w in b.train], [w.key for w in b.test])
    train, test = set(keys_a[0]), set(keys_a[1])
    assert not train & test and len(train | test) == nf + nn
    for lab in Label:
        assert any(w.label is lab for w in a.train) and any(w.label is lab for w in a.test)


def test_split_by_subject_no_leakage():
    samples = [sample(Label.FALL if i % 2 else Label.NONFALL, i, subject=str(i % 5)) for i in range(40)]
    split = collate_split(samples, 0.8, seed=2, by_subject=True)
    assert not {w.subject_id for w in split.train} & {w.subject_id for w in split.test}
    assert len({w.subject_id for w in split.train}) == 4


def test_split_bad_inputs():
    with pytest.raises(ConfigError):
        collate_split([], 0.8)
    with pytest.raises(ConfigError):
        collate_split([sample(Label.FALL, 0)], 1.5)


def test_stats_constant():
    w = WindowSample(np.full((4, 6), 7.0), Label.FALL, "c", 0)
    st_ = feature_stats([w])
    for k in ("min", "q1", "median", "q3", "max", "mean"):
        assert np.all(getattr(st_, k) == 7.0)
    assert np.all(st_.stddev == 0) and np.all(st_.iqr == 0)


def test_stats_one_to_five():
    w = WindowSample(np.repeat(np.arange(1.0, 6.0)[:, None], 6, axis=1), Label.FALL, "c", 0)
    st_ = feature_stats([w])
    assert np.all(st_.q1 == 2) and np.all(st_.median == 3) and np.all(st_.q3 == 4)
    assert np.allclose(st_.variance, 2.0)  # population variance of 1..5


def test_stats_csv(tmp_path):
    w = WindowSample(np.ones((2, 6)), Label.FALL, "c", 0)
    write_stats_csv(tmp_path / "s.csv", {"fall": feature_stats([w])})
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "group,feature,min,q1,median,q3,max,mean,stddev"
    assert len(lines) == 7 and lines[1].startswith("fall,left_hip,1.000000")


def test_fall_variance_dominates(synth_features):
    samples, skipped = build_windows(synth_features, 0.3, 15, seed=0)
    assert not skipped
    fall = feature_stats([s for s in samples if s.label is Label.FALL])
    non = feature_stats([s for s in samples if s.label is Label.NONFALL])
    assert np.all(fall.variance > non.variance)


def test_dataset_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    samples = [
        WindowSample(rng.normal(size=(4, 6)), Label.FALL, "a", 3, 0.5),
        WindowSample(rng.normal(size=(4, 6)), Label.NONFALL, "b", 0),
    ]
    write_dataset(tmp_path / "d.csv", samples)
    back = read_dataset(tmp_path / "d.csv")
    assert [w.key for w in back] == [w.key for w in samples]
    assert all(a.features.tobytes() == b.features.tobytes() for a, b in zip(back, samples))
    assert back[0].lead_time_s == 0.5 and back[1].lead_time_s is None


def test_dataset_version_refused(tmp_path):
    (tmp_path / "d.csv").write_text("# prefall-dataset 2\nsequence,label,window_start,lead_ms,K\n")
    with pytest.raises(FormatVersionError):
        read_dataset(tmp_path / "d.csv")
