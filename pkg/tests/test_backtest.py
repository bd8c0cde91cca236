from datetime import date, timedelta
from decimal import Decimal, localcontext

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import signed_sum_gross
from sectorlstm.backtest import (
    BacktestError, PredictionRow, PredictionSeries, TradeDecision, accuracy_score, daily_profit, decide, mae,
    run_backtest, to_decimal,
)

BUY, SELL = TradeDecision.BUY, TradeDecision.SELL


def dates(n):
    return [date(2024, 1, 1) + timedelta(days=k) for k in range(n)]


def series(actual, predicted, final_next=None):
    return PredictionSeries.from_arrays(dates(len(actual)), actual, predicted, final_next)


@pytest.mark.parametrize("pred,today,expected", [(11, 10, BUY), (10, 10, SELL), (9.99, 10, SELL)])
def test_decide(pred, today, expected):
    assert decide(pred, today) is expected


def test_decide_rejects_nonfinite():
    with pytest.raises(BacktestError):
        decide(float("nan"), 10.0)


@pytest.mark.parametrize("decision,today,nxt,profit", [(BUY, 10, 12, 2), (SELL, 12, 11, 1), (BUY, 10, 9, -1)])
def test_daily_profit(decision, today, nxt, profit):
    assert daily_profit(decision, today, nxt) == profit


def test_profit_is_exact_on_quoted_prices():
    # prices enter as the decimal they print as, so 0.3 - 0.1 is exactly 0.2
    assert daily_profit(BUY, 0.1, 0.3) == Decimal("0.2")
    assert to_decimal(0.1) == Decimal("0.1")
    with pytest.raises(BacktestError):
        to_decimal(float("inf"))


def enumerate_gross(actual, predicted):
    """Brute force over transitions: +move when the forecast is above today's close, -move otherwise."""
    total = 0
    for t in range(len(actual) - 1):
        move = actual[t + 1] - actual[t]
        total += move if predicted[t] > actual[t] else -move
    return total


def test_perfect_predictions_example():
    actual = [10, 12, 11, 13]
    perfect = actual[1:] + [13]
    ledger = run_backtest(series(actual, perfect))
    assert [t.decision for t in ledger.trades[:3]] == [BUY, SELL, BUY]
    assert [t.profit for t in ledger.trades[:3]] == [2, 1, 2]
    assert ledger.gross_profit == 5 == enumerate_gross(actual, perfect)
    assert ledger.gross_profit == sum(abs(b - a) for a, b in zip(actual, actual[1:]))


def test_wrong_direction_example():
    actual = [10, 12, 11, 13]
    wrong = [9, 13, 10, 13]
    ledger = run_backtest(series(actual, wrong))
    assert ledger.gross_profit == -5 == enumerate_gross(actual, wrong)


def test_final_row_is_signal_only():
    ledger = run_backtest(series([10, 12, 11, 13], [11, 11, 12, 14]))
    assert len(ledger.trades) == 4
    assert len(ledger.settled_trades) == 3
    sig = ledger.final_signal
    assert sig.decision is BUY and sig.profit is None
    settled = run_backtest(series([10, 12, 11, 13], [11, 11, 12, 14], final_next=15))
    assert settled.final_signal is None and len(settled.settled_trades) == 4


def test_totals_arithmetic_fixture():
    # one buy day earning 288537 and one sell day earning 276382
    rows = (PredictionRow(date(2024, 1, 1), 100.0, 200.0, 288637.0),
            PredictionRow(date(2024, 1, 2), 276482.0, 1.0, 100.0))
    ledger = run_backtest(PredictionSeries(rows))
    assert (ledger.total_buy_profit, ledger.total_sell_profit, ledger.gross_profit) == (288537, 276382, 564919)


def test_run_backtest_needs_two_rows():
    with pytest.raises(BacktestError):
        run_backtest(series([10.0], [11.0], final_next=12.0))


def test_series_invariants():
    with pytest.raises(BacktestError):
        PredictionSeries((PredictionRow(date(2024, 1, 2), 1.0, 1.0, 1.0), PredictionRow(date(2024, 1, 1), 1.0, 1.0, 1.0)))
    with pytest.raises(BacktestError):
        series([10.0, -1.0], [1.0, 1.0])


def test_accuracy_examples():
    assert accuracy_score(series([1, 2, 1], [2.5, 0.5, 1])) == 1.0
    assert accuracy_score(series([1, 2, 1], [0.5, 2.5, 1])) == 0.0
    assert accuracy_score(series([5, 5], [4, 6])) == 1.0  # flat actual, predicted fall
    with pytest.raises(BacktestError):
        accuracy_score(series([5.0], [6.0], final_next=7.0))


def test_mae_examples():
    assert mae(series([10, 11, 12], [11, 12, 13], final_next=13)) == 0.0
    assert mae(series([10, 11, 12], [12, 11, 0.5])) == 1.0
    rng = np.random.default_rng(8)
    actual, pred = rng.uniform(1, 100, 5), rng.uniform(1, 100, 5)
    expected = (abs(actual[1] - pred[0]) + abs(actual[2] - pred[1]) + abs(actual[3] - pred[2])
                + abs(actual[4] - pred[3])) / 4
    assert abs(mae(series(actual, pred)) - expected) <= 1e-12


def test_ledger_csv_footer():
    text = run_backtest(series([10, 12, 11, 13], [11, 11, 12, 14])).to_csv().splitlines()
    assert text[0] == "date,decision,actual_today,predicted_next,actual_next,profit"
    assert text[-3:] == ["TOTAL_BUY,,,,,4.0", "TOTAL_SELL,,,,,1.0", "GROSS,,,,,5.0"]
    assert text[4].endswith(",,")  # unsettled final signal


prices = st.floats(0.01, 1e5, allow_nan=False, allow_infinity=False)


@st.composite
def price_paths(draw, min_size=2, max_size=60):
    n = draw(st.integers(min_size, max_size))
    return draw(st.lists(prices, min_size=n, max_size=n)), draw(st.lists(prices, min_size=n, max_size=n))


@settings(max_examples=200, deadline=None)
@given(price_paths(), st.one_of(st.none(), prices))
def test_gross_matches_signed_sum_oracle(path, final_next):
    actual, predicted = path
    ledger = run_backtest(series(actual, predicted, final_next))
    nexts = actual[1:] + ([final_next] if final_next is not None else [])
    assert ledger.gross_profit == signed_sum_gross(actual, predicted, nexts)
    assert ledger.gross_profit == ledger.total_buy_profit + ledger.total_sell_profit


@settings(max_examples=100, deadline=None)
@given(price_paths(), st.lists(prices, min_size=60, max_size=60))
def test_perfect_foresight_is_an_upper_bound(path, other):
    actual, _ = path
    perfect = actual[1:] + [actual[-1]]
    best = run_backtest(series(actual, perfect))
    with localcontext() as ctx:
        ctx.prec = 200
        total_variation = sum(abs(to_decimal(b) - to_decimal(a)) for a, b in zip(actual, actual[1:]))
    assert best.gross_profit == total_variation
    assert run_backtest(series(actual, other[:len(actual)])).gross_profit <= best.gross_profit
    if all(a != b for a, b in zip(actual, actual[1:])):
        assert accuracy_score(series(actual, perfect)) == 1.0


@settings(max_examples=100, deadline=None)
@given(price_paths())
def test_flipping_every_decision_negates_gross(path):
    actual, predicted = path
    ledger = run_backtest(series(actual, predicted))
    # send each forecast to the other side of today's close
    flipped = [a / 2 if p > a else a * 2 for a, p in zip(actual, predicted)]
    assert run_backtest(series(actual, flipped)).gross_profit == -ledger.gross_profit


@settings(max_examples=100, deadline=None)
@given(price_paths(), st.sampled_from([2, 4, 0.5, 1024]))
def test_scaling_prices_scales_profit(path, c):
    # power-of-two scaling is exact in binary; shortest-repr decimals may move by an ulp per price
    actual, predicted = path
    base = run_backtest(series(actual, predicted))
    scaled = run_backtest(series([a * c for a in actual], [p * c for p in predicted]))
    slack = 4 * len(actual) * c * max(actual) * 2.0 ** -52
    assert abs(float(scaled.gross_profit) - c * float(base.gross_profit)) <= slack
    assert [t.decision for t in scaled.trades] == [t.decision for t in base.trades]
