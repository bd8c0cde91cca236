"""Deterministic synthetic OHLCV data for offline runs and tests.

The bundled set under ``data/synthetic`` is exactly what
``write_fixture_set(dir)`` produces with the default arguments.
"""
from __future__ import annotations

from datetime import date, timedelta
from pathlib import Path

import numpy as np

UNIVERSE = (
    ("Alpha", "AAA", 60.0),
    ("Alpha", "BBB", 40.0),
    ("Beta", "BBB", 55.0),
    ("Beta", "CCC", 45.0),
)

CONFIG_YAML = """\
# Small end-to-end configuration for the bundled synthetic data set.
data:
  csv_dir: prices
universe: universe.csv
date_range: {start: 2022-01-01, end: 2023-12-31}
features: [close]
model: {lookback: 10, hidden_units: 8, num_lstm_layers: 2, dropout: 0.3, dense_units: 16, horizon: 1}
train: {batch_size: 32, epochs: 40, learning_rate: 0.005, huber_delta: 1.0, grad_clip_norm: 5.0, shuffle: true}
split: {train_fraction: 0.7, val_fraction: 0.15}
output_dir: out
seed: 42
jobs: 1
backtest_span: test
"""


def business_days(start: date, n: int) -> list[date]:
    out = []
    d = start
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d += timedelta(days=1)
    return out


def synthetic_ohlcv(seed: int, n: int = 320, start: date = date(2022, 1, 3), base: float = 100.0) -> str:
    """CSV text of a trending, cyclical random walk with 2-decimal prices."""
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    period = rng.uniform(20, 40)
    log_path = (np.log(base) + 0.0004 * t + 0.06 * np.sin(2 * np.pi * t / period)
                + np.cumsum(rng.normal(0, 0.008, n)))
    close = np.round(np.exp(log_path), 2)
    open_ = np.round(close * (1 + rng.normal(0, 0.004, n)), 2)
    high = np.round(np.maximum(open_, close) * (1 + np.abs(rng.normal(0, 0.005, n))), 2)
    low = np.round(np.minimum(open_, close) * (1 - np.abs(rng.normal(0, 0.005, n))), 2)
    volume = rng.integers(10_000, 500_000, n)
    lines = ["Date,Open,High,Low,Close,Adj Close,Volume"]
    for d, o, h, lo, c, v in zip(business_days(start, n), open_, high, low, close, volume):
        lines.append(f"{d.isoformat()},{o:.2f},{h:.2f},{lo:.2f},{c:.2f},{c:.2f},{v}")
    return "\n".join(lines) + "\n"


def write_fixture_set(dest: str | Path, seed: int = 7) -> Path:
    dest = Path(dest)
    (dest / "prices").mkdir(parents=True, exist_ok=True)
    tickers = sorted({t for _, t, _ in UNIVERSE})
    for k, ticker in enumerate(tickers):
        (dest / "prices" / f"{ticker}.csv").write_text(synthetic_ohlcv(seed * 1000 + k, base=50.0 + 40.0 * k))
    rows = ["sector,ticker,weight"] + [f"{s},{t},{w}" for s, t, w in UNIVERSE]
    (dest / "universe.csv").write_text("\n".join(rows) + "\n")
    (dest / "config.yaml").write_text(CONFIG_YAML)
    return dest


def bundled_fixture_dir() -> Path:
    return Path(__file__).parent / "data" / "synthetic"
