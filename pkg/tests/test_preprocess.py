import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dataflow_sca.core import TEST, TRAIN, ConfigSpace, Trace, TraceDataset
from dataflow_sca.errors import InvalidArgument, TraceTooShort
from dataflow_sca.preprocess import (PreprocessConfig, average, average_dataset, normalize,
                                     preprocess_dataset, trim)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def T(x):
    return Trace(np.asarray(x, dtype=np.float64), 1e8)


def test_trim_full_scale_indices():
    x = np.arange(387000, dtype=np.float64)
    out = trim(T(x), PreprocessConfig(129000, 258000))
    assert len(out) == 129000
    assert out.samples[0] == 258000 and out.samples[-1] == 386999


def test_trim_identity_and_desk_default():
    x = np.arange(12288, dtype=np.float64)
    assert np.array_equal(trim(T(x), PreprocessConfig(12288)).samples, x)
    assert np.array_equal(trim(T(x), PreprocessConfig(4096, 8192)).samples, x[-4096:])


def test_trim_too_short_reports_lengths():
    with pytest.raises(TraceTooShort) as exc:
        trim(T(np.zeros(100)), PreprocessConfig(64, 50), trace_id="t7")
    assert exc.value.required == 114 and exc.value.actual == 100


@given(st.integers(1, 40), st.integers(0, 40), st.integers(0, 20))
def test_trim_window_position(window, load, extra):
    x = np.arange(window + load + extra, dtype=np.float64)
    out = trim(T(x), PreprocessConfig(window, load)).samples
    assert len(out) == window and out[0] == load


def test_normalize_examples():
    assert np.array_equal(normalize(T([1, 2, 3])).samples, [-1, 0, 1])
    assert np.array_equal(normalize(T([7.5, 7.5, 7.5])).samples, [0, 0, 0])
    z = np.array([-2.0, 0.5, 1.5])
    np.testing.assert_allclose(normalize(T(z)).samples, z, atol=1e-12)


@settings(max_examples=200)
@given(arrays(np.float64, st.integers(1, 64), elements=finite), finite)
def test_normalize_idempotent_and_offset_free(x, c):
    once = normalize(T(x)).samples
    twice = normalize(T(once)).samples
    shifted = normalize(T(x + c)).samples
    scale = max(1.0, np.abs(x).max(), abs(c))
    assert np.max(np.abs(once - twice)) <= 1e-9 * scale
    assert np.max(np.abs(once - shifted)) <= 1e-9 * scale
    assert abs(once.mean()) <= 1e-9 * scale


def test_average_examples():
    out = average([T([1, 3]), T([3, 5])], 2)
    assert len(out) == 1 and np.array_equal(out[0].samples, [2, 4])
    ts = [T([i, i]) for i in range(5)]
    assert average(ts, 1) == ts
    assert [list(t.samples) for t in average(ts, 2)] == [[0.5, 0.5], [2.5, 2.5]]


def test_average_errors():
    with pytest.raises(InvalidArgument):
        average([T([1, 2]), T([1, 2, 3])], 2)
    with pytest.raises(InvalidArgument):
        average([T([1, 2])], 2)


def test_averaging_reduces_noise_variance():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        traces = [T(rng.standard_normal(4096)) for _ in range(800)]
        out = average(traces, 4)
        assert len(out) == 200
        ratio = np.mean([t.samples.var(ddof=1) for t in out]) / np.mean(
            [t.samples.var(ddof=1) for t in traces])
        assert abs(ratio * 4 - 1) <= 0.15


@given(st.integers(1, 4), st.integers(0, 6), st.integers(1, 10), st.integers(0, 2**31))
def test_trim_and_average_commute(n, load, window, seed):
    rng = np.random.default_rng(seed)
    traces = [T(rng.normal(size=load + window + 3)) for _ in range(2 * n + 1)]
    cfg = PreprocessConfig(window, load)
    a = [trim(t, cfg) for t in average(traces, n)]
    b = average([trim(t, cfg) for t in traces], n)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x.samples, y.samples, atol=1e-12)


def test_preprocess_is_label_and_split_pure(small_ds):
    cfg = PreprocessConfig(1024, 8192, 4)
    out = preprocess_dataset(small_ds, cfg)
    # 30 per config split 24/6 -> 6 train and 1 test groups per config
    assert set(out.counts(TRAIN).values()) == {6} and set(out.counts(TEST).values()) == {1}
    src = {lt.input_id: (lt, s) for lt, s in zip(small_ds.traces, small_ds.split)}
    for lt, s in zip(out.traces, out.split):
        first, fs = src[lt.input_id]
        assert first.label == lt.label and fs == s
        members = [src[lt.input_id + i] for i in range(4)]
        assert all(m.label == lt.label and ms == s for m, ms in members)
        raw = np.mean([normalize(trim(m.trace, PreprocessConfig(1024, 8192))).samples
                       for m, _ in members], axis=0)
        np.testing.assert_allclose(lt.trace.samples, raw, atol=1e-9)


def test_preprocess_counts_per_config():
    from dataflow_sca.victim import default_models, generate_dataset
    tiny = dict(base_period_samples=16, window_samples=32, loading_len_base=32, burst_width=(2, 4))
    ds = generate_dataset(default_models(0, **tiny), 800)
    out = preprocess_dataset(ds, PreprocessConfig(32, 32, 1))
    assert len(out) == 6400 and {len(lt.trace) for lt in out.traces} == {32}
    avg = preprocess_dataset(ds, PreprocessConfig(32, 32, 4))
    totals = {c: avg.counts(TRAIN)[c] + avg.counts(TEST)[c] for c in avg.config_space.configs}
    assert set(totals.values()) == {200}


def test_preprocess_empty_dataset():
    ds = TraceDataset((), ConfigSpace(), ())
    assert len(preprocess_dataset(ds, PreprocessConfig(8, 0, 4))) == 0
