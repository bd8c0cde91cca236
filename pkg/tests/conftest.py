import shutil
import sys
from datetime import date, timedelta
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sectorlstm.marketdata import OhlcvBar, PriceSeries  # noqa: E402
from sectorlstm.synthetic import bundled_fixture_dir  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def make_series(closes, ticker="TEST", sector="Sector", start=date(2020, 1, 1), volume=None):
    bars = []
    for k, c in enumerate(closes):
        c = float(c)
        v = float(volume[k]) if volume is not None else 1000.0 + k
        bars.append(OhlcvBar(start + timedelta(days=k), c, c * 1.01, c * 0.99, c, v))
    return PriceSeries(ticker, sector, tuple(bars))


@pytest.fixture
def synthetic_dir(tmp_path):
    dest = tmp_path / "synthetic"
    shutil.copytree(bundled_fixture_dir(), dest)
    return dest


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
