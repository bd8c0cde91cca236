import io
from datetime import date

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sectorlstm.marketdata import (
    CsvFormatError, DataError, DateRange, EmptyDataError, FixtureClient, HttpClient, PriceSeries,
    TransportDisabledError, UniverseError, UnknownTickerError, load_universe, parse_ohlcv_csv,
    series_to_csv, universe_tickers,
)

HEADER = "Date,Open,High,Low,Close,Adj Close,Volume\n"


def test_three_well_formed_rows():
    text = HEADER + (
        "2020-01-02,10,11,9,10.5,10.4,100\n"
        "2020-01-03,10.5,12,10,11.5,11.4,200\n"
        "2020-01-06,11.5,12,11,11.8,11.7,300\n"
    )
    s = parse_ohlcv_csv(text, "TICK", "Auto")
    assert len(s) == 3
    assert s.dropped == 0
    assert s.bars[1].close == 11.5
    assert s.sector == "Auto"


def test_shuffled_rows_with_blank_close():
    text = HEADER + (
        "2020-01-06,11.5,12,11,11.8,11.7,300\n"
        "2020-01-02,10,11,9,,10.4,100\n"
        "2020-01-03,10.5,12,10,11.5,11.4,200\n"
    )
    s = parse_ohlcv_csv(text, "TICK")
    assert [b.date for b in s.bars] == [date(2020, 1, 3), date(2020, 1, 6)]
    assert s.dropped == 1


def test_duplicate_date_names_the_date():
    text = HEADER + "2020-01-02,10,11,9,10.5,10.4,100\n2020-01-02,10,11,9,10.6,10.4,100\n"
    with pytest.raises(DataError, match="2020-01-02"):
        parse_ohlcv_csv(text, "TICK")


def test_header_is_case_insensitive_and_extra_columns_ignored():
    text = "date,OPEN,high,Low,CLOSE,volume,Dividends\n2020-01-02,1,2,0.5,1.5,0,0.1\n"
    s = parse_ohlcv_csv(text, "X")
    assert s.bars[0].volume == 0.0


def test_missing_column():
    with pytest.raises(CsvFormatError, match="volume"):
        parse_ohlcv_csv("Date,Open,High,Low,Close\n2020-01-02,1,2,0.5,1.5\n", "X")


def test_zero_valid_rows():
    with pytest.raises(EmptyDataError):
        parse_ohlcv_csv(HEADER + "2020-01-02,null,null,null,null,null,null\n", "X")


@pytest.mark.parametrize("row", [
    "2020-01-03,-1,2,0.5,1.5,1.5,10",   # negative open
    "2020-01-03,1,0.4,0.5,1.5,1.5,10",  # high < low
    "2020-01-03,1,2,0.5,1.5,1.5,-10",   # negative volume
    "not-a-date,1,2,0.5,1.5,1.5,10",
])
def test_invalid_rows_lenient_vs_strict(row):
    text = HEADER + "2020-01-02,1,2,0.5,1.5,1.5,10\n" + row + "\n"
    s = parse_ohlcv_csv(text, "X")
    assert (len(s), s.dropped) == (1, 1)
    with pytest.raises(DataError):
        parse_ohlcv_csv(text, "X", strict=True)


def test_high_below_open_is_tolerated():
    # real feeds violate high >= max(open, close); only high >= low is enforced
    s = parse_ohlcv_csv(HEADER + "2020-01-02,3,2,1,2.5,2.5,10\n", "X", strict=True)
    assert len(s) == 1


row_strategy = st.tuples(
    st.dates(date(2000, 1, 1), date(2030, 1, 1)),
    st.floats(0.01, 1e6), st.floats(0.01, 1e6), st.floats(0.01, 1e6), st.floats(0.01, 1e6),
    st.floats(0, 1e9),
    st.booleans(),
)


@settings(max_examples=60, deadline=None)
@given(st.lists(row_strategy, min_size=1, max_size=30, unique_by=lambda r: r[0]))
def test_roundtrip_and_row_accounting(rows):
    lines = []
    for d, o, h, lo, c, v, corrupt in rows:
        hi, low = max(h, lo), min(h, lo)
        close = "" if corrupt else repr(c)
        lines.append(f"{d.isoformat()},{o!r},{hi!r},{low!r},{close},{v!r}")
    text = "Date,Open,High,Low,Close,Volume\n" + "\n".join(lines) + "\n"
    n_bad = sum(r[-1] for r in rows)
    if n_bad == len(rows):
        with pytest.raises(EmptyDataError):
            parse_ohlcv_csv(text, "X")
        return
    s = parse_ohlcv_csv(text, "X")
    assert len(s) + s.dropped == len(rows)
    again = parse_ohlcv_csv(series_to_csv(s), "X")
    assert again.bars == s.bars


def test_price_series_rejects_unsorted():
    s = parse_ohlcv_csv(HEADER + "2020-01-02,1,2,0.5,1.5,1.5,10\n2020-01-03,1,2,0.5,1.5,1.5,10\n", "X")
    with pytest.raises(DataError):
        PriceSeries("X", "", tuple(reversed(s.bars)))


def test_date_range_defaults_and_validation():
    r = DateRange()
    assert (r.start, r.end) == (date(2005, 1, 1), date(2024, 4, 23))
    with pytest.raises(ValueError):
        DateRange(date(2020, 1, 2), date(2020, 1, 1))
    assert DateRange(date(1970, 1, 1), date(1970, 1, 2)).epochs() == (0, 86400)


def test_universe_two_sectors():
    doc = "sector,ticker,weight\nAuto,M&M,18.26\nAuto,TATAMOTORS,17.35\nBank,HDFCBANK,29.00\nBank,SBIN,9.14\n"
    us = load_universe(doc)
    assert [u.sector for u in us] == ["Auto", "Bank"]
    assert [len(u.members) for u in us] == [2, 2]
    assert us[0].members[0] == ("M&M", 18.26)
    assert universe_tickers(us) == ["M&M", "TATAMOTORS", "HDFCBANK", "SBIN"]


def test_universe_duplicate_ticker():
    with pytest.raises(UniverseError, match="duplicate"):
        load_universe("sector,ticker,weight\nAuto,M&M,18.26\nAuto,M&M,1\n")


@pytest.mark.parametrize("weight", ["0", "-1", "100.5"])
def test_universe_weight_bounds(weight):
    with pytest.raises(UniverseError):
        load_universe(f"sector,ticker,weight\nAuto,X,{weight}\n")


def test_universe_weight_optional_and_shared_tickers():
    us = load_universe(io.StringIO("sector,ticker,weight\nA,X,\nB,X,100\n"))
    assert us[0].members == (("X", None),)
    assert us[1].members == (("X", 100.0),)


def test_fixture_client(tmp_path):
    payload = "Date,Open,High,Low,Close,Volume\n2020-01-02,1,2,0.5,1.5,10\n"
    (tmp_path / "TICK.csv").write_text(payload)
    client = FixtureClient(tmp_path)
    rng = DateRange(date(2020, 1, 1), date(2020, 1, 10))
    assert client.fetch_history("TICK", rng) == payload
    with pytest.raises(UnknownTickerError, match="NOPE"):
        client.fetch_history("NOPE", rng)


def test_http_client_disabled(monkeypatch):
    rng = DateRange(date(2020, 1, 1), date(2020, 1, 10))
    with pytest.raises(TransportDisabledError, match="TICK"):
        HttpClient(enabled=False).fetch_history("TICK", rng)
    monkeypatch.setenv("SECTORLSTM_OFFLINE", "1")
    with pytest.raises(TransportDisabledError):
        HttpClient().fetch_history("TICK", rng)


def test_http_client_url_template(monkeypatch):
    monkeypatch.setenv("SECTORLSTM_FETCH_URL", "http://example.invalid/{ticker}?a={start_epoch}&b={end_epoch}")
    url = HttpClient().url_for("SBIN.NS", DateRange(date(1970, 1, 2), date(1970, 1, 3)))
    assert url == "http://example.invalid/SBIN.NS?a=86400&b=172800"


def test_http_client_against_local_server():
    import http.server
    import threading

    body = b"Date,Open,High,Low,Close,Volume\n2020-01-02,1,2,0.5,1.5,10\n"

    class Handler(http.server.BaseHTTPRequestHandler):
        def do_GET(self):
            if self.path.startswith("/GOOD"):
                self.send_response(200)
                self.end_headers()
                self.wfile.write(body)
            elif self.path.startswith("/EMPTY"):
                self.send_response(200)
                self.end_headers()
            else:
                self.send_response(404)
                self.end_headers()

        def log_message(self, *args):
            pass

    server = http.server.HTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        from sectorlstm.marketdata import EmptyPayloadError
        client = HttpClient(f"http://127.0.0.1:{server.server_port}/{{ticker}}?s={{start_epoch}}&e={{end_epoch}}")
        rng = DateRange(date(2020, 1, 1), date(2020, 1, 10))
        assert client.fetch_history("GOOD", rng) == body.decode()
        with pytest.raises(UnknownTickerError):
            client.fetch_history("MISSING", rng)
        with pytest.raises(EmptyPayloadError):
            client.fetch_history("EMPTY", rng)
    finally:
        server.shutdown()
