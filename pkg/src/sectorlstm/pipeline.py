"""Ingest -> train -> backtest orchestration over a sector universe.

Output layout under ``config.output_dir``::

    cache/<TICKER>.csv, cache/inventory.csv      (ingest)
    models/<TICKER>.ckpt, models/loss_<TICKER>.csv, models/leaderboard_<TICKER>.csv  (train)
    reports/...                                   (backtest; see analytics.emit_reports)

Per-ticker work is independent and seeded from :func:`derive_seed`, so the
results do not depend on the worker count or on which other tickers run.
"""
from __future__ import annotations

import csv
import hashlib
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Callable, Sequence

import numpy as np

from . import __version__, _kernels
from .analytics import (
    Overlay, StockResult, build_sector_report, emit_reports, mean_close, rank_sectors,
)
from .backtest import EvalMetrics, PredictionSeries, accuracy_score, mae, run_backtest
from .checkpoint import load_model, save_model
from .config import RunConfig
from .dataset import build_splits, make_windows
from .marketdata import (
    FixtureClient, HttpClient, MarketDataError, PriceSeries, SectorUniverse, load_universe,
    parse_ohlcv_csv, series_to_csv, universe_tickers,
)
from .neuralnet import TrainedModel, predict_scaled
from .training import LossHistory, grid_search, huber, train_model

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_PARTIAL = 2
EXIT_CONFIG = 3


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass
class StageResult:
    stage: str
    ok: list[str] = field(default_factory=list)
    failed: dict[str, str] = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        if not self.ok:
            return EXIT_FAILED
        return EXIT_PARTIAL if self.failed else EXIT_OK


def derive_seed(master_seed: int, ticker: str) -> int:
    """64-bit seed: first 8 bytes (little-endian) of SHA-256 over ``"<master_seed>:<ticker>"``."""
    digest = hashlib.sha256(f"{master_seed}:{ticker}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def read_universe(cfg: RunConfig) -> list[SectorUniverse]:
    return load_universe(cfg.universe.read_text(encoding="utf-8"))


def _sector_of(universes: Sequence[SectorUniverse]) -> dict[str, str]:
    out: dict[str, str] = {}
    for u in universes:
        for t in u.tickers:
            out.setdefault(t, u.sector)
    return out


def _select(all_tickers: list[str], tickers: Sequence[str] | None) -> list[str]:
    if not tickers:
        return all_tickers
    unknown = [t for t in tickers if t not in all_tickers]
    if unknown:
        raise StageError("select", f"ticker(s) not in universe: {', '.join(unknown)}")
    return [t for t in all_tickers if t in set(tickers)]


def _map(fn: Callable, items: list, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- ingest

def _client(cfg: RunConfig):
    if cfg.data.fetch:
        return HttpClient(cfg.data.url_template)
    return FixtureClient(cfg.data.csv_dir)


def cmd_ingest(cfg: RunConfig, tickers: Sequence[str] | None = None, client=None) -> StageResult:
    universes = read_universe(cfg)
    sectors = _sector_of(universes)
    selected = _select(universe_tickers(universes), tickers)
    client = client or _client(cfg)
    cfg.cache_dir.mkdir(parents=True, exist_ok=True)
    result = StageResult("ingest")
    inventory = [["ticker", "status", "rows", "dropped", "first_date", "last_date", "error"]]
    for ticker in selected:
        try:
            text = client.fetch_history(ticker, cfg.date_range)
            series = parse_ohlcv_csv(text, ticker, sectors[ticker], strict=cfg.data.strict)
            dropped = series.dropped
            series = series.slice_dates(cfg.date_range.start, cfg.date_range.end)
        except MarketDataError as exc:
            logger.warning("ingest %s failed: %s", ticker, exc)
            result.failed[ticker] = str(exc)
            inventory.append([ticker, "failed", 0, 0, "", "", str(exc)])
            continue
        (cfg.cache_dir / f"{ticker}.csv").write_text(series_to_csv(series), encoding="utf-8")
        result.ok.append(ticker)
        inventory.append([ticker, "ok", len(series), dropped, series.bars[0].date.isoformat(),
                          series.bars[-1].date.isoformat(), ""])
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(inventory)
    (cfg.cache_dir / "inventory.csv").write_text(buf.getvalue(), encoding="utf-8")
    return result


def load_cached(cfg: RunConfig, ticker: str, sector: str = "") -> PriceSeries:
    path = cfg.cache_dir / f"{ticker}.csv"
    if not path.is_file():
        raise StageError("train", f"no cached data for {ticker} at {path}; run `sectorlstm ingest` first")
    return parse_ohlcv_csv(path.read_text(encoding="utf-8"), ticker, sector, strict=True)


# ---------------------------------------------------------------- train

def _train_one(job: tuple[RunConfig, str, str]) -> tuple[str, str | None]:
    cfg, ticker, sector = job
    try:
        series = load_cached(cfg, ticker, sector)
        train, val, _ = build_splits(series, cfg.features, cfg.model.lookback, cfg.model.horizon, cfg.split)
        seed = derive_seed(cfg.seed, ticker)
        tc = replace(cfg.train, seed=seed)
        extra = {"ticker": ticker, "seed": seed, "n_train": len(train), "n_val": len(val)}
        if cfg.grid is not None:
            res = grid_search(cfg.grid, train, val, cfg.model, tc)
            params, history, mc = res.best.params, res.best.history, res.best_model_config
            (cfg.models_dir / f"leaderboard_{ticker}.csv").write_text(res.leaderboard_csv(), encoding="utf-8")
            extra["grid_point"] = res.best.point
        else:
            mc = cfg.model
            params, history = train_model(train, val, mc, tc)
        model = TrainedModel(mc, params, train.scaler, cfg.features)
        save_model(cfg.models_dir / f"{ticker}.ckpt", model, extra)
        (cfg.models_dir / f"loss_{ticker}.csv").write_text(history.to_csv(), encoding="utf-8")
        return ticker, None
    except Exception as exc:  # noqa: BLE001 - per-ticker isolation
        logger.warning("train %s failed: %s", ticker, exc)
        return ticker, f"{type(exc).__name__}: {exc}"


def cmd_train(cfg: RunConfig, tickers: Sequence[str] | None = None) -> StageResult:
    universes = read_universe(cfg)
    sectors = _sector_of(universes)
    selected = _select(universe_tickers(universes), tickers)
    missing = [t for t in selected if not (cfg.cache_dir / f"{t}.csv").is_file()]
    if len(missing) == len(selected):
        raise StageError("train", f"no cached data in {cfg.cache_dir}; run `sectorlstm ingest` first")
    cfg.models_dir.mkdir(parents=True, exist_ok=True)
    result = StageResult("train")
    outcomes = _map(_train_one, [(cfg, t, sectors[t]) for t in selected], cfg.workers())
    for ticker, err in outcomes:
        if err is None:
            result.ok.append(ticker)
        else:
            result.failed[ticker] = err
    return result


# ---------------------------------------------------------------- backtest

# predictor(ticker, model, series, today_indices) -> predicted next-day closes
Predictor = Callable[[str, TrainedModel, PriceSeries, np.ndarray], np.ndarray]


def model_predictor(ticker: str, model: TrainedModel, series: PriceSeries, today: np.ndarray) -> np.ndarray:
    """Next-day close forecasts from the trained model for each index in ``today``."""
    L = model.config.lookback
    raw = model.features.matrix(series)
    scaled = model.scaler.transform_matrix(raw)
    windows = np.stack([scaled[i - L + 1:i + 1] for i in today])
    pred = predict_scaled(model, windows)[:, 0]
    return np.asarray(model.scaler.inverse_transform(pred, "close"), dtype=np.float64)


def perfect_foresight(ticker: str, model: TrainedModel, series: PriceSeries, today: np.ndarray) -> np.ndarray:
    """Stub predictor that returns the realised next close (today's close on the last bar)."""
    closes = np.asarray(series.closes())
    return closes[np.minimum(today + 1, len(closes) - 1)]


@dataclass
class TickerOutcome:
    ticker: str
    ledger: object
    mean_price: float
    metrics: EvalMetrics
    overlay: Overlay
    history: LossHistory | None


def _backtest_one(cfg: RunConfig, ticker: str, sector: str, predictor: Predictor) -> TickerOutcome:
    ckpt = cfg.models_dir / f"{ticker}.ckpt"
    if not ckpt.is_file():
        raise StageError("backtest", f"missing checkpoint for {ticker} at {ckpt}; run `sectorlstm train` first")
    model = load_model(ckpt)
    series = load_cached(cfg, ticker, sector)
    L, h = model.config.lookback, model.config.horizon
    _, _, test = build_splits(series, cfg.features, L, h, cfg.split)
    if cfg.backtest_span == "full":
        windows = make_windows(series, cfg.features, model.scaler, L, h)
        starts = windows.starts
    else:
        starts = test.starts
    today = starts + L - 1
    if cfg.split.test_end is None:
        # final signal from the last L bars; its outcome is not yet known
        today = np.append(today, len(series) - 1)
    today = np.unique(today)
    preds = predictor(ticker, model, series, today)
    closes = series.closes()
    dates = series.dates
    n = len(series)
    rows_actual = [closes[i] for i in today]
    last_next = closes[today[-1] + 1] if today[-1] + 1 < n else None
    pseries = PredictionSeries.from_arrays([dates[i] for i in today], rows_actual, preds, last_next)
    ledger = run_backtest(pseries)

    settled = pseries.settled()
    scaler = model.scaler
    p_scaled = scaler.transform(np.array([r.predicted_next for r in settled]), "close")
    a_scaled = scaler.transform(np.array([r.actual_next for r in settled]), "close")
    loss, _ = huber(p_scaled, a_scaled, cfg.train.huber_delta)
    metrics = EvalMetrics(float(np.mean(loss)), mae(pseries), accuracy_score(pseries))
    next_dates = [dates[i + 1] for i in today if i + 1 < n]
    overlay = Overlay(tuple(next_dates), tuple(r.actual_next for r in settled), tuple(r.predicted_next for r in settled))
    loss_path = cfg.models_dir / f"loss_{ticker}.csv"
    history = LossHistory.from_csv(loss_path.read_text(encoding="utf-8")) if loss_path.is_file() else None
    return TickerOutcome(ticker, ledger, mean_close(series, cfg.date_range), metrics, overlay, history)


def cmd_backtest(cfg: RunConfig, tickers: Sequence[str] | None = None, predictor: Predictor | None = None,
                 manifest_extra: dict | None = None) -> StageResult:
    universes = read_universe(cfg)
    sectors = _sector_of(universes)
    selected = _select(universe_tickers(universes), tickers)
    predictor = predictor or model_predictor
    result = StageResult("backtest")
    outcomes: dict[str, TickerOutcome] = {}
    for ticker in selected:
        try:
            outcomes[ticker] = _backtest_one(cfg, ticker, sectors[ticker], predictor)
            result.ok.append(ticker)
        except Exception as exc:  # noqa: BLE001 - per-ticker isolation
            logger.warning("backtest %s failed: %s", ticker, exc)
            result.failed[ticker] = f"{type(exc).__name__}: {exc}"
    if not outcomes:
        return result

    reports = []
    for u in universes:
        members = [t for t in u.tickers if t in outcomes]
        if not members:
            continue
        results = [StockResult.from_ledger(t, u.sector, outcomes[t].ledger, outcomes[t].mean_price, outcomes[t].metrics)
                   for t in members]
        reports.append(build_sector_report(u.sector, results))
    summary = rank_sectors(reports)
    manifest = {
        "version": __version__,
        "kernel_backend": _kernels.BACKEND,
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config": cfg.to_dict(),
        "master_seed": cfg.seed,
        "ticker_seeds": {t: derive_seed(cfg.seed, t) for t in outcomes},
        "date_range": [cfg.date_range.start.isoformat(), cfg.date_range.end.isoformat()],
        "failed": result.failed,
        **(manifest_extra or {}),
    }
    emit_reports(
        summary, reports,
        {t: o.ledger for t, o in outcomes.items()},
        {t: o.history for t, o in outcomes.items() if o.history is not None},
        {t: o.overlay for t, o in outcomes.items()},
        cfg.reports_dir, manifest,
    )
    worst = summary.worst_accuracy()
    if worst is not None:
        logger.info("lowest sector accuracy score: %s %.6f", worst[0], worst[1])
    return result


def cmd_run(cfg: RunConfig, tickers: Sequence[str] | None = None) -> tuple[int, list[StageResult]]:
    """Ingest, train and backtest. Stops at the first stage where every ticker fails."""
    stages = []
    for stage, fn in (("ingest", cmd_ingest), ("train", cmd_train), ("backtest", cmd_backtest)):
        res = fn(cfg, tickers)
        stages.append(res)
        if res.exit_code == EXIT_FAILED:
            raise StageError(stage, "every ticker failed: " + "; ".join(f"{t}: {e}" for t, e in res.failed.items()))
        tickers = res.ok if tickers is None else [t for t in tickers if t in res.ok]
    code = EXIT_PARTIAL if any(s.failed for s in stages) else EXIT_OK
    return code, stages
