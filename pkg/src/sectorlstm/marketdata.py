"""OHLCV ingestion: CSV parsing, the sector universe file and history fetch clients."""
from __future__ import annotations

import csv
import io
import logging
import math
import os
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Iterable, Protocol

logger = logging.getLogger(__name__)

DEFAULT_START = date(2005, 1, 1)
DEFAULT_END = date(2024, 4, 23)

REQUIRED_COLUMNS = ("date", "open", "high", "low", "close", "volume")
PRICE_FIELDS = ("open", "high", "low", "close", "volume")

FETCH_URL_ENV = "SECTORLSTM_FETCH_URL"
OFFLINE_ENV = "SECTORLSTM_OFFLINE"
DEFAULT_URL_TEMPLATE = (
    "https://query1.finance.yahoo.com/v7/finance/download/{ticker}"
    "?period1={start_epoch}&period2={end_epoch}&interval=1d&events=history"
)


class MarketDataError(Exception):
    """Base class for ingestion failures."""


class CsvFormatError(MarketDataError):
    pass


class DataError(MarketDataError):
    pass


class EmptyDataError(MarketDataError):
    pass


class UniverseError(MarketDataError):
    pass


class FetchError(MarketDataError):
    def __init__(self, message: str, ticker: str, date_range: "DateRange"):
        super().__init__(f"{message} [ticker={ticker}, range={date_range.start}..{date_range.end}]")
        self.ticker = ticker
        self.date_range = date_range


class TransportError(FetchError):
    pass


class TransportDisabledError(TransportError):
    pass


class UnknownTickerError(FetchError):
    pass


class EmptyPayloadError(FetchError):
    pass


@dataclass(frozen=True)
class OhlcvBar:
    date: date
    open: float
    high: float
    low: float
    close: float
    volume: float

    def problems(self) -> list[str]:
        out = []
        for name in ("open", "high", "low", "close"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                out.append(f"{name} must be positive, got {v}")
        if not (math.isfinite(self.volume) and self.volume >= 0):
            out.append(f"volume must be non-negative, got {self.volume}")
        if self.high < self.low:
            out.append(f"high {self.high} < low {self.low}")
        return out


@dataclass(frozen=True)
class PriceSeries:
    ticker: str
    sector: str
    bars: tuple[OhlcvBar, ...]
    dropped: int = 0

    def __post_init__(self):
        if not self.bars:
            raise EmptyDataError(f"{self.ticker}: no bars")
        object.__setattr__(self, "bars", tuple(self.bars))
        for prev, cur in zip(self.bars, self.bars[1:]):
            if cur.date <= prev.date:
                raise DataError(f"{self.ticker}: dates not strictly ascending at {cur.date}")

    def __len__(self) -> int:
        return len(self.bars)

    @property
    def dates(self) -> list[date]:
        return [b.date for b in self.bars]

    def column(self, name: str) -> list[float]:
        return [getattr(b, name) for b in self.bars]

    def closes(self) -> list[float]:
        return self.column("close")

    def slice_dates(self, start: date | None = None, end: date | None = None) -> "PriceSeries":
        bars = [b for b in self.bars if (start is None or b.date >= start) and (end is None or b.date <= end)]
        return PriceSeries(self.ticker, self.sector, tuple(bars))

    def with_bars(self, bars: Iterable[OhlcvBar]) -> "PriceSeries":
        return PriceSeries(self.ticker, self.sector, tuple(bars))


@dataclass(frozen=True)
class DateRange:
    start: date = DEFAULT_START
    end: date = DEFAULT_END

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"date range start {self.start} must precede end {self.end}")

    def epochs(self) -> tuple[int, int]:
        to_epoch = lambda d: int(datetime(d.year, d.month, d.day, tzinfo=timezone.utc).timestamp())  # noqa: E731
        return to_epoch(self.start), to_epoch(self.end)


@dataclass(frozen=True)
class SectorUniverse:
    sector: str
    members: tuple[tuple[str, float | None], ...] = field(default_factory=tuple)

    @property
    def tickers(self) -> list[str]:
        return [t for t, _ in self.members]


def _parse_float(raw: str | None) -> float:
    if raw is None:
        raise ValueError("missing")
    raw = raw.strip()
    if not raw or raw.lower() in ("null", "nan", "na", "n/a"):
        raise ValueError("blank")
    value = float(raw)
    if not math.isfinite(value):
        raise ValueError("non-finite")
    return value


def parse_ohlcv_csv(text: str | io.TextIOBase, ticker: str, sector: str = "", *, strict: bool = False) -> PriceSeries:
    """Parse a Date/Open/High/Low/Close/Volume CSV into a validated series.

    Column names match case-insensitively and extra columns are ignored.
    In lenient mode unparseable or invalid rows are dropped and counted in
    ``PriceSeries.dropped``; in strict mode the first bad row raises.
    """
    stream = io.StringIO(text) if isinstance(text, str) else text
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise CsvFormatError(f"{ticker}: empty document") from None
    index = {name.strip().lower(): i for i, name in enumerate(header)}
    missing = [c for c in REQUIRED_COLUMNS if c not in index]
    if missing:
        raise CsvFormatError(f"{ticker}: missing required column(s) {', '.join(missing)}")

    bars: list[OhlcvBar] = []
    dropped = 0
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            cells = {c: (row[index[c]] if index[c] < len(row) else None) for c in REQUIRED_COLUMNS}
            day = date.fromisoformat((cells["date"] or "").strip())
            values = {c: _parse_float(cells[c]) for c in PRICE_FIELDS}
            bar = OhlcvBar(day, **values)
            problems = bar.problems()
            if problems:
                raise ValueError("; ".join(problems))
        except ValueError as exc:
            if strict:
                raise DataError(f"{ticker}: invalid row at line {lineno}: {exc}") from None
            dropped += 1
            continue
        bars.append(bar)

    if not bars:
        raise EmptyDataError(f"{ticker}: no valid rows ({dropped} dropped)")
    bars.sort(key=lambda b: b.date)
    for prev, cur in zip(bars, bars[1:]):
        if prev.date == cur.date:
            raise DataError(f"{ticker}: duplicate date {cur.date.isoformat()}")
    if dropped:
        logger.info("%s: dropped %d invalid row(s)", ticker, dropped)
    return PriceSeries(ticker, sector, tuple(bars), dropped)


def series_to_csv(series: PriceSeries) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["Date", "Open", "High", "Low", "Close", "Volume"])
    for b in series.bars:
        writer.writerow([b.date.isoformat(), repr(b.open), repr(b.high), repr(b.low), repr(b.close), repr(b.volume)])
    return buf.getvalue()


def load_universe(document: str | io.TextIOBase) -> list[SectorUniverse]:
    """Read a ``sector,ticker,weight`` CSV into one universe per sector.

    ``weight`` is optional (blank allowed) and, when given, must lie in
    (0, 100]. Sector order and member order follow the file.
    """
    stream = io.StringIO(document) if isinstance(document, str) else document
    reader = csv.DictReader(stream)
    fields = {(f or "").strip().lower(): f for f in (reader.fieldnames or [])}
    if "sector" not in fields or "ticker" not in fields:
        raise UniverseError("universe file needs 'sector' and 'ticker' columns")
    members: dict[str, list[tuple[str, float | None]]] = {}
    for lineno, row in enumerate(reader, start=2):
        sector = (row[fields["sector"]] or "").strip()
        ticker = (row[fields["ticker"]] or "").strip()
        if not sector or not ticker:
            raise UniverseError(f"line {lineno}: sector and ticker are required")
        raw_weight = (row.get(fields.get("weight", ""), "") or "").strip() if "weight" in fields else ""
        weight = None
        if raw_weight:
            try:
                weight = float(raw_weight)
            except ValueError:
                raise UniverseError(f"line {lineno}: bad weight {raw_weight!r}") from None
            if not 0 < weight <= 100:
                raise UniverseError(f"line {lineno}: weight {weight} for {ticker} outside (0, 100]")
        group = members.setdefault(sector, [])
        if any(t == ticker for t, _ in group):
            raise UniverseError(f"duplicate ticker {ticker} in sector {sector}")
        group.append((ticker, weight))
    return [SectorUniverse(sector, tuple(m)) for sector, m in members.items()]


def universe_tickers(universes: Iterable[SectorUniverse]) -> list[str]:
    """Distinct tickers across all sectors in first-seen order."""
    seen: dict[str, None] = {}
    for u in universes:
        for t in u.tickers:
            seen.setdefault(t, None)
    return list(seen)


class HistoryClient(Protocol):
    def fetch_history(self, ticker: str, date_range: DateRange) -> str: ...


class FixtureClient:
    """Serves ``<root>/<ticker>.csv`` verbatim. Used by tests and offline runs."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)

    def fetch_history(self, ticker: str, date_range: DateRange) -> str:
        path = self.root / f"{ticker}.csv"
        if not path.is_file():
            raise UnknownTickerError("no fixture for ticker", ticker, date_range)
        text = path.read_text(encoding="utf-8")
        if not text.strip():
            raise EmptyPayloadError("fixture is empty", ticker, date_range)
        return text


class HttpClient:
    """HTTP GET against a URL template with ``{ticker}``, ``{start_epoch}``, ``{end_epoch}``.

    The template comes from the constructor, else ``$SECTORLSTM_FETCH_URL``,
    else a Yahoo-style default. Setting ``$SECTORLSTM_OFFLINE`` (or
    ``enabled=False``) disables the transport entirely.
    """

    def __init__(self, url_template: str | None = None, *, enabled: bool = True, timeout: float = 30.0):
        self.url_template = url_template or os.environ.get(FETCH_URL_ENV) or DEFAULT_URL_TEMPLATE
        self.enabled = enabled and not os.environ.get(OFFLINE_ENV)
        self.timeout = timeout

    def url_for(self, ticker: str, date_range: DateRange) -> str:
        start_epoch, end_epoch = date_range.epochs()
        return self.url_template.format(ticker=ticker, start_epoch=start_epoch, end_epoch=end_epoch)

    def fetch_history(self, ticker: str, date_range: DateRange) -> str:
        if not self.enabled:
            raise TransportDisabledError("live fetch disabled", ticker, date_range)
        request = urllib.request.Request(self.url_for(ticker, date_range), headers={"User-Agent": "sectorlstm"})
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                body = resp.read().decode("utf-8")
        except urllib.error.HTTPError as exc:
            if exc.code == 404:
                raise UnknownTickerError("ticker not found (HTTP 404)", ticker, date_range) from exc
            raise TransportError(f"HTTP {exc.code}", ticker, date_range) from exc
        except (urllib.error.URLError, OSError) as exc:
            raise TransportError(f"transport failure: {exc}", ticker, date_range) from exc
        if not body.strip():
            raise EmptyPayloadError("empty response body", ticker, date_range)
        return body
