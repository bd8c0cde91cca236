"""Mandatory daily single-share buy/sell backtest on (actual, predicted) prices.

Profits are accumulated as exact decimals: every price enters as the
shortest decimal that round-trips its float, and a trapping context makes
any inexact addition an error. Totals therefore cross-foot exactly and are
only rounded when reports are rendered.
"""
from __future__ import annotations

import csv
import decimal
import enum
import io
import math
from dataclasses import dataclass
from datetime import date
from decimal import Decimal
from typing import Iterable, Sequence

import numpy as np

_EXACT = decimal.Context(prec=200, traps=[decimal.Inexact, decimal.InvalidOperation, decimal.Overflow])


class BacktestError(ValueError):
    pass


def to_decimal(x: float) -> Decimal:
    """Exact decimal image of a float as printed by ``repr``."""
    if isinstance(x, Decimal):
        return x
    x = float(x)
    if not math.isfinite(x):
        raise BacktestError(f"non-finite price {x}")
    return Decimal(repr(x))


class TradeDecision(enum.Enum):
    BUY = "Buy"
    SELL = "Sell"


@dataclass(frozen=True)
class PredictionRow:
    date: date
    actual_today: float
    predicted_next: float
    actual_next: float | None = None


@dataclass(frozen=True)
class PredictionSeries:
    rows: tuple[PredictionRow, ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        for prev, cur in zip(self.rows, self.rows[1:]):
            if cur.date <= prev.date:
                raise BacktestError(f"prediction dates not strictly ascending at {cur.date}")
        for r in self.rows:
            for v in (r.actual_today, r.predicted_next, r.actual_next):
                if v is not None and not (math.isfinite(v) and v > 0):
                    raise BacktestError(f"{r.date}: prices must be positive and finite, got {v}")

    def __len__(self) -> int:
        return len(self.rows)

    @classmethod
    def from_arrays(cls, dates: Sequence[date], actual: Sequence[float], predicted_next: Sequence[float],
                    final_actual_next: float | None = None) -> "PredictionSeries":
        """Rows from a date-aligned actual close series.

        ``predicted_next[t]`` is the forecast for day t+1 made on day t. The
        next-day actual of row t is ``actual[t+1]``; for the final row it is
        ``final_actual_next`` (None when the next day is not yet known).
        """
        if not (len(dates) == len(actual) == len(predicted_next)):
            raise BacktestError("dates, actual and predicted_next must have equal length")
        n = len(dates)
        rows = []
        for t in range(n):
            nxt = float(actual[t + 1]) if t + 1 < n else final_actual_next
            rows.append(PredictionRow(dates[t], float(actual[t]), float(predicted_next[t]), nxt))
        return cls(tuple(rows))

    def settled(self) -> list[PredictionRow]:
        return [r for r in self.rows if r.actual_next is not None]


@dataclass(frozen=True)
class DailyTrade:
    date: date
    decision: TradeDecision
    actual_today: float
    predicted_next: float
    actual_next: float | None
    profit: Decimal | None


@dataclass(frozen=True)
class TradeLedger:
    trades: tuple[DailyTrade, ...]
    total_buy_profit: Decimal
    total_sell_profit: Decimal
    gross_profit: Decimal

    @property
    def settled_trades(self) -> list[DailyTrade]:
        return [t for t in self.trades if t.profit is not None]

    @property
    def final_signal(self) -> DailyTrade | None:
        """The last day's decision when it has no next-day actual to settle against."""
        last = self.trades[-1] if self.trades else None
        return last if last is not None and last.profit is None else None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["date", "decision", "actual_today", "predicted_next", "actual_next", "profit"])
        for t in self.trades:
            w.writerow([
                t.date.isoformat(), t.decision.value, repr(t.actual_today), repr(t.predicted_next),
                "" if t.actual_next is None else repr(t.actual_next),
                "" if t.profit is None else str(t.profit),
            ])
        w.writerow(["TOTAL_BUY", "", "", "", "", str(self.total_buy_profit)])
        w.writerow(["TOTAL_SELL", "", "", "", "", str(self.total_sell_profit)])
        w.writerow(["GROSS", "", "", "", "", str(self.gross_profit)])
        return buf.getvalue()


def decide(predicted_next: float, actual_today: float) -> TradeDecision:
    """Buy iff the forecast is strictly above today's close; ties sell."""
    if not (math.isfinite(predicted_next) and math.isfinite(actual_today)):
        raise BacktestError(f"non-finite input: predicted={predicted_next}, actual={actual_today}")
    return TradeDecision.BUY if predicted_next > actual_today else TradeDecision.SELL


def daily_profit(decision: TradeDecision, actual_today: float, actual_next: float) -> Decimal:
    today = to_decimal(actual_today)
    nxt = to_decimal(actual_next)
    if decision is TradeDecision.BUY:
        return _EXACT.subtract(nxt, today)
    return _EXACT.subtract(today, nxt)


def _exact_sum(values: Iterable[Decimal]) -> Decimal:
    total = Decimal(0)
    for v in values:
        total = _EXACT.add(total, v)
    return total


def run_backtest(series: PredictionSeries) -> TradeLedger:
    if len(series) < 2:
        raise BacktestError(f"need at least 2 rows to settle a trade, got {len(series)}")
    trades = []
    for r in series.rows:
        decision = decide(r.predicted_next, r.actual_today)
        profit = None if r.actual_next is None else daily_profit(decision, r.actual_today, r.actual_next)
        trades.append(DailyTrade(r.date, decision, r.actual_today, r.predicted_next, r.actual_next, profit))
    buy = _exact_sum(t.profit for t in trades if t.profit is not None and t.decision is TradeDecision.BUY)
    sell = _exact_sum(t.profit for t in trades if t.profit is not None and t.decision is TradeDecision.SELL)
    return TradeLedger(tuple(trades), buy, sell, _EXACT.add(buy, sell))


def _require_settled(series: PredictionSeries) -> list[PredictionRow]:
    if len(series) < 2:
        raise BacktestError(f"need at least 2 rows, got {len(series)}")
    rows = series.settled()
    if not rows:
        raise BacktestError("no rows with a next-day actual")
    return rows


def accuracy_score(series: PredictionSeries) -> float:
    """Fraction of settled days whose predicted direction matches the actual one.

    A move is "up" only if strictly positive; flat and falling are both
    "not up", consistent with the sell-on-tie rule.
    """
    rows = _require_settled(series)
    hits = sum((r.predicted_next > r.actual_today) == (r.actual_next > r.actual_today) for r in rows)
    return hits / len(rows)


def mae(series: PredictionSeries) -> float:
    """Mean absolute difference between forecasts and the realised next-day close."""
    rows = series.settled()
    if not rows:
        raise BacktestError("empty comparison set")
    return float(np.mean([abs(r.actual_next - r.predicted_next) for r in rows]))


@dataclass(frozen=True)
class EvalMetrics:
    huber_loss: float
    mae: float
    accuracy_score: float
