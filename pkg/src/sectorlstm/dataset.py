"""Min-max scaling, lookback windows and chronological splits.

Scalers are fit on the bars reachable from the training windows only, so
values later in the series can never leak into training tensors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date

import numpy as np

from .marketdata import PriceSeries

FEATURE_NAMES = ("open", "high", "low", "close", "volume")


class DatasetError(ValueError):
    pass


class DegenerateScaleError(DatasetError):
    pass


class InsufficientDataError(DatasetError):
    pass


class SplitError(DatasetError):
    pass


@dataclass(frozen=True)
class FeatureSpec:
    features: tuple[str, ...] = ("close",)
    target: str = "close"

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        unknown = [f for f in self.features if f not in FEATURE_NAMES]
        if unknown:
            raise ValueError(f"unknown feature(s) {unknown}; choose from {FEATURE_NAMES}")
        if len(set(self.features)) != len(self.features):
            raise ValueError(f"duplicate features in {self.features}")
        if self.target != "close" or "close" not in self.features:
            raise ValueError("close must be among the features and is the only supported target")

    @property
    def target_index(self) -> int:
        return self.features.index(self.target)

    def matrix(self, series: PriceSeries) -> np.ndarray:
        """Raw feature matrix of shape (len(series), F)."""
        return np.array([[getattr(b, f) for f in self.features] for b in series.bars], dtype=np.float64)


@dataclass(frozen=True)
class ScalerParams:
    features: tuple[str, ...]
    mins: tuple[float, ...]
    maxs: tuple[float, ...]

    def __post_init__(self):
        for name, lo, hi in zip(self.features, self.mins, self.maxs):
            if not hi > lo:
                raise DegenerateScaleError(f"feature {name!r} is constant over the fit range ({lo})")

    def _idx(self, feature: str) -> int:
        return self.features.index(feature)

    def transform(self, value, feature: str):
        """``(x - min) / (max - min)``. Values outside the fit range map outside [0, 1]."""
        k = self._idx(feature)
        return (value - self.mins[k]) / (self.maxs[k] - self.mins[k])

    def inverse_transform(self, scaled, feature: str):
        k = self._idx(feature)
        return scaled * (self.maxs[k] - self.mins[k]) + self.mins[k]

    def transform_matrix(self, raw: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.mins)
        hi = np.asarray(self.maxs)
        return (raw - lo) / (hi - lo)

    def to_dict(self) -> dict:
        return {"features": list(self.features), "mins": list(self.mins), "maxs": list(self.maxs)}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(tuple(d["features"]), tuple(float(x) for x in d["mins"]), tuple(float(x) for x in d["maxs"]))


def transform(value, scaler: ScalerParams, feature: str):
    return scaler.transform(value, feature)


def inverse_transform(scaled, scaler: ScalerParams, feature: str):
    return scaler.inverse_transform(scaled, feature)


def fit_scaler(series: PriceSeries, spec: FeatureSpec, fit_range: range | slice | None = None) -> ScalerParams:
    """Per-feature min/max over ``fit_range`` (bar indices, default: all bars)."""
    if fit_range is None:
        fit_range = range(len(series))
    if isinstance(fit_range, slice):
        fit_range = range(*fit_range.indices(len(series)))
    if len(fit_range) == 0 or fit_range.start < 0 or fit_range[-1] >= len(series):
        raise DatasetError(f"fit range {fit_range} empty or outside series of length {len(series)}")
    raw = spec.matrix(series)[fit_range.start:fit_range[-1] + 1:fit_range.step]
    return ScalerParams(spec.features, tuple(float(v) for v in raw.min(axis=0)), tuple(float(v) for v in raw.max(axis=0)))


@dataclass(frozen=True, eq=False)
class WindowedDataset:
    inputs: np.ndarray  # (N, L, F)
    targets: np.ndarray  # (N, h)
    sample_dates: tuple[date, ...]
    scaler: ScalerParams
    lookback: int
    horizon: int
    # bar index of each sample's first input bar
    starts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_features(self) -> int:
        return self.inputs.shape[2]

    def subset(self, lo: int, hi: int) -> "WindowedDataset":
        return WindowedDataset(
            self.inputs[lo:hi], self.targets[lo:hi], self.sample_dates[lo:hi],
            self.scaler, self.lookback, self.horizon, self.starts[lo:hi],
        )


def min_length(lookback: int, horizon: int) -> int:
    return lookback + horizon


def make_windows(series: PriceSeries, spec: FeatureSpec, scaler: ScalerParams, lookback: int, horizon: int = 1) -> WindowedDataset:
    """Sample k uses bars [k, k+L) as input and the close at bar k+L+h-1 as its target."""
    if lookback < 1 or horizon < 1:
        raise DatasetError("lookback and horizon must be positive")
    n_bars = len(series)
    if n_bars < lookback + horizon:
        raise InsufficientDataError(
            f"{series.ticker}: {n_bars} bars, need at least {lookback + horizon} (lookback {lookback} + horizon {horizon})"
        )
    scaled = scaler.transform_matrix(spec.matrix(series))
    n = n_bars - lookback - horizon + 1
    starts = np.arange(n)
    inputs = np.stack([scaled[k:k + lookback] for k in starts])
    close = scaled[:, spec.target_index]
    # horizon columns: closes at bars k+L .. k+L+h-1; the last one is the h-day-ahead target
    targets = np.stack([close[k + lookback:k + lookback + horizon] for k in starts])
    dates = series.dates
    sample_dates = tuple(dates[k + lookback + horizon - 1] for k in starts)
    return WindowedDataset(inputs, targets, sample_dates, scaler, lookback, horizon, starts)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    val_fraction: float = 0.1
    test_start: date | None = None
    test_end: date | None = None

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must be in (0, 1)")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must be in [0, 1)")
        if self.test_start is None and not self.train_fraction + self.val_fraction < 1:
            raise ValueError("train_fraction + val_fraction must be < 1")
        if (self.test_end is not None) and self.test_start is None:
            raise ValueError("test_end requires test_start")

    def sizes(self, sample_dates: tuple[date, ...] | list[date]) -> tuple[int, int, int]:
        """(train, val, test) sample counts for a dataset with these target dates."""
        n = len(sample_dates)
        if self.test_start is None:
            n_train = math.floor(n * self.train_fraction)
            n_val = math.floor(n * self.val_fraction)
            n_test = n - n_train - n_val
        else:
            # explicit test window: everything before it is split train/val in proportion
            n_pre = sum(1 for d in sample_dates if d < self.test_start)
            n_test = sum(1 for d in sample_dates if d >= self.test_start and (self.test_end is None or d <= self.test_end))
            share = self.val_fraction / (self.train_fraction + self.val_fraction)
            n_val = math.floor(n_pre * share)
            n_train = n_pre - n_val
        return n_train, n_val, n_test


def chronological_split(dataset: WindowedDataset, split: SplitSpec, *, allow_empty_val: bool = False):
    """Contiguous (train, val, test) datasets ordered by target date."""
    n_train, n_val, n_test = split.sizes(dataset.sample_dates)
    if n_train <= 0 or n_test <= 0 or (n_val <= 0 and not allow_empty_val):
        raise SplitError(f"empty split for N={len(dataset)}: train={n_train} val={n_val} test={n_test}")
    a, b = n_train, n_train + n_val
    return dataset.subset(0, a), dataset.subset(a, b), dataset.subset(b, b + n_test)


def train_bar_span(n_train: int, lookback: int, horizon: int) -> range:
    """Bar indices touched by the first ``n_train`` samples (inputs and targets)."""
    return range(0, n_train - 1 + lookback + horizon)


def build_splits(series: PriceSeries, spec: FeatureSpec, lookback: int, horizon: int, split: SplitSpec):
    """Fit the scaler on the training span, window the series and split it.

    Returns ``(train, val, test)``.
    """
    if len(series) < lookback + horizon:
        raise InsufficientDataError(
            f"{series.ticker}: {len(series)} bars, need at least {lookback + horizon} (lookback {lookback} + horizon {horizon})"
        )
    n = len(series) - lookback - horizon + 1
    dates = series.dates
    target_dates = [dates[k + lookback + horizon - 1] for k in range(n)]
    n_train, n_val, n_test = split.sizes(target_dates)
    if n_train <= 0 or n_val <= 0 or n_test <= 0:
        raise SplitError(f"{series.ticker}: empty split for N={n}: train={n_train} val={n_val} test={n_test}")
    scaler = fit_scaler(series, spec, train_bar_span(n_train, lookback, horizon))
    full = make_windows(series, spec, scaler, lookback, horizon)
    return chronological_split(full, split)
