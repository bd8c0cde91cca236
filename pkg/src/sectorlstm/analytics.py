"""Profitability ratios, sector indices, rankings and report files."""
from __future__ import annotations

import csv
import decimal
import io
import json
import math
import re
from dataclasses import dataclass, field
from datetime import date
from decimal import Decimal
from pathlib import Path
from typing import Mapping, Sequence

from .backtest import EvalMetrics, TradeLedger
from .marketdata import DateRange, PriceSeries
from .training import LossHistory


class AnalyticsError(ValueError):
    pass


class ReportWriteError(OSError):
    pass


def mean_close(series: PriceSeries, date_range: DateRange | None = None) -> float:
    """Arithmetic mean of raw closes over ``date_range`` (inclusive; all bars if None)."""
    if date_range is None:
        closes = series.closes()
    else:
        closes = [b.close for b in series.bars if date_range.start <= b.date <= date_range.end]
    if not closes:
        raise AnalyticsError(f"{series.ticker}: no bars in range {date_range}")
    return math.fsum(closes) / len(closes)


def profitability_ratio(gross_profit, mean_price: float) -> float:
    """Gross profit normalised by the mean close (dimensionless)."""
    if not mean_price > 0:
        raise AnalyticsError(f"mean price must be positive, got {mean_price}")
    return float(gross_profit) / mean_price


def sector_profitability_index(ratios: Sequence[float]) -> float:
    """Unweighted mean of member profitability ratios."""
    if len(ratios) == 0:
        raise AnalyticsError("cannot average an empty list of ratios")
    return math.fsum(ratios) / len(ratios)


@dataclass(frozen=True)
class StockResult:
    ticker: str
    sector: str
    total_buy_profit: Decimal
    total_sell_profit: Decimal
    gross_profit: Decimal
    mean_close: float
    profitability_ratio: float
    metrics: EvalMetrics | None = None

    @classmethod
    def from_ledger(cls, ticker: str, sector: str, ledger: TradeLedger, mean_price: float,
                    metrics: EvalMetrics | None = None) -> "StockResult":
        return cls(ticker, sector, ledger.total_buy_profit, ledger.total_sell_profit, ledger.gross_profit,
                   mean_price, profitability_ratio(ledger.gross_profit, mean_price), metrics)


@dataclass(frozen=True)
class SectorReport:
    sector: str
    stock_results: tuple[StockResult, ...]
    profitability_index: float
    avg_huber: float | None = None
    avg_mae: float | None = None
    avg_accuracy: float | None = None


def sector_metric_averages(metrics: Sequence[EvalMetrics | None]) -> tuple[float, float, float]:
    """(mean Huber, mean MAE, mean accuracy) over a sector's members."""
    if len(metrics) == 0:
        raise AnalyticsError("no member metrics")
    if any(m is None for m in metrics):
        raise AnalyticsError("every member needs evaluation metrics")
    n = len(metrics)
    return (
        math.fsum(m.huber_loss for m in metrics) / n,
        math.fsum(m.mae for m in metrics) / n,
        math.fsum(m.accuracy_score for m in metrics) / n,
    )


def build_sector_report(sector: str, results: Sequence[StockResult]) -> SectorReport:
    if not results:
        raise AnalyticsError(f"sector {sector!r} has no stock results")
    index = sector_profitability_index([r.profitability_ratio for r in results])
    if all(r.metrics is not None for r in results):
        h, m, a = sector_metric_averages([r.metrics for r in results])
    else:
        h = m = a = None
    return SectorReport(sector, tuple(results), index, h, m, a)


@dataclass(frozen=True)
class RunSummary:
    ranking: tuple[tuple[str, float], ...]
    metric_rows: tuple[tuple[str, float | None, float | None, float | None], ...] = field(default_factory=tuple)

    def worst_accuracy(self) -> tuple[str, float] | None:
        """Sector with the lowest averaged accuracy score, if metrics exist."""
        rows = [(s, a) for s, _, _, a in self.metric_rows if a is not None]
        if not rows:
            return None
        return min(rows, key=lambda r: (r[1], r[0]))


def rank_sectors(reports: Sequence[SectorReport]) -> RunSummary:
    """Order sectors by profitability index, highest first; ties alphabetical."""
    ordered = sorted(reports, key=lambda r: (-r.profitability_index, r.sector))
    ranking = tuple((r.sector, r.profitability_index) for r in ordered)
    metrics = tuple((r.sector, r.avg_huber, r.avg_mae, r.avg_accuracy) for r in ordered)
    return RunSummary(ranking, metrics)


def slugify(name: str) -> str:
    """File-name form of a sector or ticker: lowercase, runs of other characters become '_'."""
    slug = re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")
    return slug or "unnamed"


@dataclass(frozen=True)
class Overlay:
    dates: tuple[date, ...]
    actual_close: tuple[float, ...]
    predicted_close: tuple[float, ...]


def _csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, Decimal):
        return str(x)
    return repr(float(x))


def sector_csv(report: SectorReport) -> str:
    rows = [["ticker", "buy_profit", "sell_profit", "gross_profit", "mean_price", "ratio"]]
    for r in report.stock_results:
        rows.append([r.ticker, _fmt(r.total_buy_profit), _fmt(r.total_sell_profit), _fmt(r.gross_profit),
                     _fmt(r.mean_close), _fmt(r.profitability_ratio)])
    rows.append(["SECTOR_INDEX", "", "", "", "", _fmt(report.profitability_index)])
    return _csv(rows)


def summary_csv(summary: RunSummary) -> str:
    return _csv([["sector", "profitability_index"], *[[s, _fmt(v)] for s, v in summary.ranking]])


def metrics_csv(summary: RunSummary) -> str:
    return _csv([["sector", "huber_loss", "mae", "accuracy_score"],
                 *[[s, _fmt(h), _fmt(m), _fmt(a)] for s, h, m, a in summary.metric_rows]])


def overlay_csv(overlay: Overlay) -> str:
    rows = [["date", "actual_close", "predicted_close"]]
    rows += [[d.isoformat(), _fmt(a), _fmt(p)] for d, a, p in zip(overlay.dates, overlay.actual_close, overlay.predicted_close)]
    return _csv(rows)


def _round(x, places: int) -> str:
    if x is None:
        return "n/a"
    return f"{float(x):.{places}f}" if not isinstance(x, Decimal) else str(x.quantize(Decimal(1).scaleb(-places)))


def render_markdown(summary: RunSummary, reports: Sequence[SectorReport]) -> str:
    """Human-readable tables; currency and ratios to 2 dp, losses and accuracy to 6 dp."""
    out = []
    for rep in sorted(reports, key=lambda r: r.sector):
        out.append(f"## {rep.sector}\n")
        out.append("| Stock | Buy Profit | Sell Profit | Gross Profit | Mean Price | Gross Profit / Mean Price |")
        out.append("|---|---:|---:|---:|---:|---:|")
        for r in rep.stock_results:
            out.append(f"| {r.ticker} | {_round(r.total_buy_profit, 2)} | {_round(r.total_sell_profit, 2)} | "
                       f"{_round(r.gross_profit, 2)} | {_round(r.mean_close, 2)} | {_round(r.profitability_ratio, 2)} |")
        out.append(f"| Sectoral average of gross profit/mean price | | | | | {_round(rep.profitability_index, 2)} |\n")
    out.append("## Sector ranking\n")
    out.append("| Sector | Profitability Index |")
    out.append("|---|---:|")
    out += [f"| {s} | {_round(v, 2)} |" for s, v in summary.ranking]
    out.append("\n## Model performance\n")
    out.append("| Sector | Huber Loss | MAE | Acc. Score |")
    out.append("|---|---:|---:|---:|")
    out += [f"| {s} | {_round(h, 6)} | {_round(m, 6)} | {_round(a, 6)} |" for s, h, m, a in summary.metric_rows]
    worst = summary.worst_accuracy()
    if worst is not None:
        out.append(f"\nLowest sector accuracy score: {worst[0]} ({_round(worst[1], 6)})")
    return "\n".join(out) + "\n"


def emit_reports(summary: RunSummary, reports: Sequence[SectorReport], ledgers: Mapping[str, TradeLedger],
                 loss_histories: Mapping[str, LossHistory], overlays: Mapping[str, Overlay],
                 output_dir: str | Path, manifest: Mapping | None = None) -> list[Path]:
    """Write every report file into ``output_dir`` and return the paths written.

    Files: ``sector_<slug>.csv``, ``summary.csv``, ``model_metrics.csv``,
    ``loss_<ticker>.csv``, ``overlay_<ticker>.csv``, ``ledger_<ticker>.csv``,
    ``report.md`` and, when given, ``manifest.json``. All content is
    generated before the first write so a failure leaves nothing behind.
    """
    if not reports:
        raise AnalyticsError("no sector reports to emit")
    files: dict[str, str] = {}
    for rep in reports:
        name = f"sector_{slugify(rep.sector)}.csv"
        if name in files:
            raise AnalyticsError(f"sector names collide on file {name}")
        files[name] = sector_csv(rep)
    files["summary.csv"] = summary_csv(summary)
    files["model_metrics.csv"] = metrics_csv(summary)
    for ticker in sorted(loss_histories):
        files[f"loss_{slugify(ticker)}.csv"] = loss_histories[ticker].to_csv()
    for ticker in sorted(overlays):
        files[f"overlay_{slugify(ticker)}.csv"] = overlay_csv(overlays[ticker])
    for ticker in sorted(ledgers):
        files[f"ledger_{slugify(ticker)}.csv"] = ledgers[ticker].to_csv()
    files["report.md"] = render_markdown(summary, reports)
    if manifest is not None:
        files["manifest.json"] = json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n"

    out = Path(output_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            path = out / name
            path.write_text(text, encoding="utf-8", newline="")
            written.append(path)
    except OSError as exc:
        raise ReportWriteError(f"failed writing reports to {out}: {exc}") from exc
    return written


def read_sector_csv(path: str | Path) -> tuple[list[dict], float]:
    """Parse a ``sector_*.csv`` back into stock rows and the footer index."""
    rows = list(csv.DictReader(io.StringIO(Path(path).read_text(encoding="utf-8"))))
    footer = rows.pop()
    if footer["ticker"] != "SECTOR_INDEX":
        raise AnalyticsError(f"{path}: missing SECTOR_INDEX footer")
    return rows, float(footer["ratio"])


def cross_foot(path: str | Path, rel_tol: float = 1e-9) -> None:
    """Re-read a sector file and check gross = buy + sell and index = mean(ratios)."""
    rows, index = read_sector_csv(path)
    ctx = decimal.Context(prec=200)
    for r in rows:
        if ctx.add(Decimal(r["buy_profit"]), Decimal(r["sell_profit"])) != Decimal(r["gross_profit"]):
            raise AnalyticsError(f"{path}: {r['ticker']} gross != buy + sell")
        if not math.isclose(float(r["gross_profit"]) / float(r["mean_price"]), float(r["ratio"]), rel_tol=rel_tol):
            raise AnalyticsError(f"{path}: {r['ticker']} ratio != gross / mean")
    mean = math.fsum(float(r["ratio"]) for r in rows) / len(rows)
    if not math.isclose(mean, index, rel_tol=rel_tol, abs_tol=1e-12):
        raise AnalyticsError(f"{path}: sector index {index} != mean of ratios {mean}")
