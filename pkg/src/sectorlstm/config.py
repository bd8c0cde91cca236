"""Run configuration: a single YAML file validated before any work starts.

Example::

    data:
      csv_dir: prices          # directory of <TICKER>.csv (relative to this file)
      fetch: false             # true: use the HTTP client instead of csv_dir
      url_template: null       # overrides $SECTORLSTM_FETCH_URL
      strict: false            # reject (instead of drop) invalid rows
    universe: universe.csv     # sector,ticker,weight
    date_range: {start: 2005-01-01, end: 2024-04-23}
    features: [close]
    model: {lookback: 50, hidden_units: 256, num_lstm_layers: 2, dropout: 0.3,
            dense_units: 256, horizon: 1}
    train: {batch_size: 64, epochs: 100, learning_rate: 0.001, huber_delta: 1.0,
            beta1: 0.9, beta2: 0.999, eps: 1.0e-8, grad_clip_norm: 5.0, shuffle: true}
    split: {train_fraction: 0.8, val_fraction: 0.1, test_start: null, test_end: null}
    output_dir: out
    seed: 42
    jobs: null                 # worker processes; null = all cores
    backtest_span: test        # test | full
    grid: null                 # e.g. {hidden_units: [64, 128], learning_rate: [0.001, 0.0005]}

Unknown keys anywhere are errors. ``n_features`` is derived from
``features`` and per-ticker training seeds from ``seed``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from datetime import date
from pathlib import Path
from typing import Any

import yaml

from .dataset import FeatureSpec, SplitSpec
from .marketdata import DateRange
from .neuralnet import ModelConfig
from .training import HyperGrid, TrainConfig


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"config field '{field_name}': {message}")
        self.field = field_name


@dataclass(frozen=True)
class DataSource:
    csv_dir: Path | None = None
    fetch: bool = False
    url_template: str | None = None
    strict: bool = False


@dataclass(frozen=True)
class RunConfig:
    data: DataSource
    universe: Path
    date_range: DateRange = field(default_factory=DateRange)
    features: FeatureSpec = field(default_factory=FeatureSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    output_dir: Path = Path("out")
    seed: int = 0
    jobs: int | None = None
    backtest_span: str = "test"
    grid: HyperGrid | None = None

    @property
    def cache_dir(self) -> Path:
        return self.output_dir / "cache"

    @property
    def models_dir(self) -> Path:
        return self.output_dir / "models"

    @property
    def reports_dir(self) -> Path:
        return self.output_dir / "reports"

    def workers(self) -> int:
        return self.jobs or os.cpu_count() or 1

    def to_dict(self) -> dict:
        return {
            "data": {"csv_dir": None if self.data.csv_dir is None else str(self.data.csv_dir),
                     "fetch": self.data.fetch, "url_template": self.data.url_template, "strict": self.data.strict},
            "universe": str(self.universe),
            "date_range": {"start": self.date_range.start.isoformat(), "end": self.date_range.end.isoformat()},
            "features": list(self.features.features),
            "model": {k: v for k, v in self.model.to_dict().items() if k != "n_features"},
            "train": {k: v for k, v in self.train.to_dict().items() if k != "seed"},
            "split": {"train_fraction": self.split.train_fraction, "val_fraction": self.split.val_fraction,
                      "test_start": None if self.split.test_start is None else self.split.test_start.isoformat(),
                      "test_end": None if self.split.test_end is None else self.split.test_end.isoformat()},
            "output_dir": str(self.output_dir),
            "seed": self.seed,
            "jobs": self.jobs,
            "backtest_span": self.backtest_span,
            "grid": None if self.grid is None else dict(self.grid.candidates),
        }


TOP_KEYS = {"data", "universe", "date_range", "features", "model", "train", "split", "output_dir", "seed", "jobs",
            "backtest_span", "grid"}
DATA_KEYS = {f.name for f in fields(DataSource)}
MODEL_KEYS = {f.name for f in fields(ModelConfig)} - {"n_features"}
TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"seed"}
SPLIT_KEYS = {f.name for f in fields(SplitSpec)}


def _check_keys(section: str, mapping: Any, allowed: set[str]) -> dict:
    if mapping is None:
        return {}
    if not isinstance(mapping, dict):
        raise ConfigError(section, f"expected a mapping, got {type(mapping).__name__}")
    for key in mapping:
        if key not in allowed:
            name = f"{section}.{key}" if section else str(key)
            raise ConfigError(name, f"unknown key (allowed: {', '.join(sorted(allowed))})")
    return dict(mapping)


def _as_date(name: str, value) -> date | None:
    if value is None or isinstance(value, date):
        return value
    try:
        return date.fromisoformat(str(value))
    except ValueError:
        raise ConfigError(name, f"not an ISO date: {value!r}") from None


def _build(name: str, factory, **kwargs):
    try:
        return factory(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, str(exc)) from None


def parse_config(raw: dict, base_dir: Path = Path("."), *, check_paths: bool = True) -> RunConfig:
    raw = _check_keys("", raw, TOP_KEYS)
    for required in ("data", "universe"):
        if required not in raw:
            raise ConfigError(required, "required")

    data_raw = _check_keys("data", raw["data"], DATA_KEYS)
    csv_dir = data_raw.get("csv_dir")
    data = _build("data", DataSource,
                  csv_dir=None if csv_dir is None else (base_dir / csv_dir),
                  fetch=bool(data_raw.get("fetch", False)),
                  url_template=data_raw.get("url_template"),
                  strict=bool(data_raw.get("strict", False)))
    if not data.fetch and data.csv_dir is None:
        raise ConfigError("data.csv_dir", "required unless data.fetch is true")

    universe = base_dir / str(raw["universe"])

    dr_raw = _check_keys("date_range", raw.get("date_range"), {"start", "end"})
    date_range = _build("date_range", DateRange,
                        **{k: _as_date(f"date_range.{k}", v) for k, v in dr_raw.items()})

    feats = raw.get("features", ["close"])
    if isinstance(feats, str):
        feats = [feats]
    features = _build("features", FeatureSpec, features=tuple(feats))

    model_raw = _check_keys("model", raw.get("model"), MODEL_KEYS)
    model = _build("model", ModelConfig, **{**model_raw, "n_features": len(features.features)})

    train_raw = _check_keys("train", raw.get("train"), TRAIN_KEYS)
    train = _build("train", TrainConfig, **train_raw)

    split_raw = _check_keys("split", raw.get("split"), SPLIT_KEYS)
    for k in ("test_start", "test_end"):
        if k in split_raw:
            split_raw[k] = _as_date(f"split.{k}", split_raw[k])
    split = _build("split", SplitSpec, **split_raw)

    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed", f"must be a non-negative integer, got {seed!r}")
    jobs = raw.get("jobs")
    if jobs is not None and (not isinstance(jobs, int) or isinstance(jobs, bool) or jobs < 1):
        raise ConfigError("jobs", f"must be a positive integer or null, got {jobs!r}")
    span = raw.get("backtest_span", "test")
    if span not in ("test", "full"):
        raise ConfigError("backtest_span", f"must be 'test' or 'full', got {span!r}")
    grid = None
    if raw.get("grid"):
        grid_raw = raw["grid"]
        if not isinstance(grid_raw, dict):
            raise ConfigError("grid", "expected a mapping of key -> list of candidates")
        grid = _build("grid", HyperGrid,
                      candidates={k: list(v) if isinstance(v, (list, tuple)) else [v] for k, v in grid_raw.items()})

    cfg = RunConfig(data, universe, date_range, features, model, train, split,
                    base_dir / str(raw.get("output_dir", "out")), seed, jobs, span, grid)
    if check_paths:
        validate_paths(cfg)
    return cfg


def validate_paths(cfg: RunConfig) -> None:
    if not cfg.universe.is_file():
        raise ConfigError("universe", f"file not found: {cfg.universe}")
    if not cfg.data.fetch and not cfg.data.csv_dir.is_dir():
        raise ConfigError("data.csv_dir", f"directory not found: {cfg.data.csv_dir}")


def load_config(path: str | Path, *, check_paths: bool = True) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("--config", f"invalid YAML: {exc}") from None
    return parse_config(raw or {}, path.parent, check_paths=check_paths)


def with_overrides(cfg: RunConfig, *, seed: int | None = None, output_dir: str | Path | None = None,
                   jobs: int | None = None) -> RunConfig:
    changes: dict[str, Any] = {}
    if seed is not None:
        if seed < 0:
            raise ConfigError("seed", "must be non-negative")
        changes["seed"] = seed
    if output_dir is not None:
        changes["output_dir"] = Path(output_dir)
    if jobs is not None:
        if jobs < 1:
            raise ConfigError("jobs", "must be >= 1")
        changes["jobs"] = jobs
    return replace(cfg, **changes) if changes else cfg
