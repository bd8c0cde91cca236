from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_series
from sectorlstm.dataset import (
    DegenerateScaleError, FeatureSpec, InsufficientDataError, ScalerParams, SplitError, SplitSpec,
    build_splits, chronological_split, fit_scaler, inverse_transform, make_windows, train_bar_span, transform,
)


def test_fit_scaler_close():
    s = make_series([10, 20, 15])
    sc = fit_scaler(s, FeatureSpec())
    assert (sc.mins, sc.maxs) == ((10.0, ), (20.0, ))


def test_fit_scaler_constant_volume():
    s = make_series([10, 20, 15], volume=[5, 5, 5])
    with pytest.raises(DegenerateScaleError, match="volume"):
        fit_scaler(s, FeatureSpec(("close", "volume")))


def test_fit_scaler_uses_only_fit_range():
    s = make_series([10, 20, 15, 99])
    sc = fit_scaler(s, FeatureSpec(), range(0, 3))
    assert sc.maxs == (20.0,)


def test_transform_examples():
    sc = ScalerParams(("close",), (10.0,), (20.0,))
    assert transform(15.0, sc, "close") == 0.5
    assert transform(25.0, sc, "close") == 1.5
    x = 12.34
    assert abs(inverse_transform(transform(x, sc, "close"), sc, "close") - x) <= 1e-9 * abs(x)


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), st.floats(1e-3, 1e6))
def test_transform_roundtrip(x, lo, span):
    sc = ScalerParams(("close",), (lo,), (lo + span,))
    back = sc.inverse_transform(sc.transform(x, "close"), "close")
    assert abs(back - x) <= 1e-9 * max(abs(x), abs(lo), span)


def test_feature_spec_validation():
    with pytest.raises(ValueError):
        FeatureSpec(("open",))
    with pytest.raises(ValueError):
        FeatureSpec(("close", "close"))
    assert FeatureSpec(("open", "high", "low", "close", "volume")).target_index == 3


def test_window_count_by_enumeration():
    # oracle: enumerate every start index whose input and target fit in the series
    L, h, n = 50, 1, 55
    starts = [k for k in range(n) if k + L + h - 1 < n]
    assert starts == [0, 1, 2, 3, 4]
    s = make_series(np.linspace(10, 20, n))
    ds = make_windows(s, FeatureSpec(), fit_scaler(s, FeatureSpec()), L, h)
    assert len(ds) == len(starts) == 5
    assert ds.inputs.shape == (5, 50, 1)
    assert ds.targets.shape == (5, 1)


def test_window_boundaries():
    s50 = make_series(np.linspace(10, 20, 50))
    with pytest.raises(InsufficientDataError, match="51"):
        make_windows(s50, FeatureSpec(), fit_scaler(s50, FeatureSpec()), 50, 1)
    s51 = make_series(np.linspace(10, 20, 51))
    sc = fit_scaler(s51, FeatureSpec())
    ds = make_windows(s51, FeatureSpec(), sc, 50, 1)
    assert len(ds) == 1
    assert ds.targets[0, 0] == sc.transform(s51.bars[-1].close, "close") == 1.0
    assert ds.sample_dates == (s51.bars[-1].date,)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 60), st.integers(1, 8), st.integers(1, 3), st.integers(0, 2**31))
def test_window_target_alignment(n_extra, lookback, horizon, seed):
    rng = np.random.default_rng(seed)
    n = lookback + horizon + n_extra
    s = make_series(rng.uniform(5, 50, n))
    spec = FeatureSpec(("open", "close", "volume"))
    sc = fit_scaler(s, spec)
    ds = make_windows(s, spec, sc, lookback, horizon)
    closes = s.closes()
    assert len(ds) == n - lookback - horizon + 1
    assert np.all(ds.inputs >= 0) and np.all(ds.inputs <= 1)
    for k in range(len(ds)):
        raw = sc.inverse_transform(ds.targets[k, -1], "close")
        assert abs(raw - closes[k + lookback + horizon - 1]) <= 1e-9 * abs(raw)
    assert all(a < b for a, b in zip(ds.sample_dates, ds.sample_dates[1:]))


def _dataset(n):
    s = make_series(np.linspace(10, 20, n + 5))
    return make_windows(s, FeatureSpec(), fit_scaler(s, FeatureSpec()), 5, 1)


def test_split_sizes():
    ds = _dataset(10)
    tr, va, te = chronological_split(ds, SplitSpec(0.8, 0.1))
    assert (len(tr), len(va), len(te)) == (8, 1, 1)
    assert max(tr.sample_dates) < min(va.sample_dates) < min(te.sample_dates)


def test_split_empty_val():
    with pytest.raises(SplitError):
        chronological_split(_dataset(10), SplitSpec(0.95, 0.04))


def test_split_concatenation_reproduces_dataset():
    ds = _dataset(37)
    parts = chronological_split(ds, SplitSpec(0.6, 0.2))
    assert np.array_equal(np.concatenate([p.inputs for p in parts]), ds.inputs)
    assert np.array_equal(np.concatenate([p.targets for p in parts]), ds.targets)
    assert sum((p.sample_dates for p in parts), ()) == ds.sample_dates


def test_explicit_test_window():
    s = make_series(np.linspace(10, 20, 100), start=date(2024, 1, 1))
    split = SplitSpec(0.8, 0.2, test_start=date(2024, 3, 1), test_end=date(2024, 3, 20))
    tr, va, te = build_splits(s, FeatureSpec(), 5, 1, split)
    assert te.sample_dates[0] == date(2024, 3, 1) and te.sample_dates[-1] == date(2024, 3, 20)
    assert len(te) == 20
    assert len(tr) + len(va) == sum(1 for d in s.dates[5:] if d < date(2024, 3, 1))


def test_empty_explicit_test_window():
    s = make_series(np.linspace(10, 20, 60), start=date(2024, 1, 1))
    with pytest.raises(SplitError, match="test=0"):
        build_splits(s, FeatureSpec(), 5, 1, SplitSpec(test_start=date(2030, 1, 1)))


def test_no_leakage_from_test_span():
    rng = np.random.default_rng(3)
    closes = rng.uniform(50, 60, 200)
    spec, L, h, split = FeatureSpec(), 10, 1, SplitSpec(0.7, 0.15)
    tr, va, te = build_splits(make_series(closes), spec, L, h, split)
    first_test_only_bar = train_bar_span(len(tr) + len(va), L, h).stop
    perturbed = closes.copy()
    perturbed[first_test_only_bar:] *= 3.0
    tr2, va2, te2 = build_splits(make_series(perturbed), spec, L, h, split)
    assert tr2.scaler == tr.scaler
    assert np.array_equal(tr2.inputs, tr.inputs) and np.array_equal(tr2.targets, tr.targets)
    assert not np.array_equal(te2.targets, te.targets)
