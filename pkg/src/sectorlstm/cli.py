"""Command line entry point: ``sectorlstm {ingest,train,backtest,run,fixtures}``.

Exit codes: 0 success, 1 total failure, 2 partial failure (some tickers
failed), 3 configuration error.
"""
from __future__ import annotations

import argparse
import logging
import shutil
import sys
from pathlib import Path

from .config import ConfigError, load_config, with_overrides
from .pipeline import (
    EXIT_CONFIG, EXIT_FAILED, StageError, StageResult, cmd_backtest, cmd_ingest, cmd_run, cmd_train,
)
from .synthetic import bundled_fixture_dir

logger = logging.getLogger("sectorlstm")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, type=Path, help="YAML run configuration")
    p.add_argument("--seed", type=int, help="master seed (overrides the config file)")
    p.add_argument("--tickers", help="comma-separated subset of universe tickers")
    p.add_argument("--out", type=Path, help="output directory (overrides the config file)")
    p.add_argument("--jobs", type=int, help="worker processes for per-ticker jobs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sectorlstm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("ingest", "fetch/parse OHLCV data into the cache"),
        ("train", "train one model per cached ticker"),
        ("backtest", "backtest trained models and write sector reports"),
        ("run", "ingest, train and backtest in one go"),
    ):
        _common(sub.add_parser(name, help=help_text))
    fx = sub.add_parser("fixtures", help="copy the bundled synthetic data set to a directory")
    fx.add_argument("dest", type=Path)
    return parser


def _report(res: StageResult) -> None:
    print(f"{res.stage}: {len(res.ok)} ok, {len(res.failed)} failed")
    for ticker, err in res.failed.items():
        print(f"  {ticker}: {err}", file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "fixtures":
        shutil.copytree(bundled_fixture_dir(), args.dest, dirs_exist_ok=True)
        print(f"wrote synthetic fixture set to {args.dest}")
        return 0

    try:
        cfg = with_overrides(load_config(args.config), seed=args.seed, output_dir=args.out, jobs=args.jobs)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    tickers = [t.strip() for t in args.tickers.split(",") if t.strip()] if args.tickers else None

    try:
        if args.command == "run":
            code, stages = cmd_run(cfg, tickers)
            for res in stages:
                _report(res)
            print(f"reports written to {cfg.reports_dir}")
            return code
        fn = {"ingest": cmd_ingest, "train": cmd_train, "backtest": cmd_backtest}[args.command]
        res = fn(cfg, tickers)
        _report(res)
        return res.exit_code
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
