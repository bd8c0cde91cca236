"""Huber loss, clipped Adam, the minibatch training loop and grid search."""
from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any

import numpy as np

from .dataset import WindowedDataset
from .neuralnet import ModelConfig, ModelParams, backward, forward, init_params

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    epochs: int = 100
    learning_rate: float = 1e-3
    huber_delta: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip_norm: float | None = 5.0
    shuffle: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.huber_delta > 0:
            raise ValueError("huber_delta must be > 0")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if not self.learning_rate > 0 or not self.eps > 0:
            raise ValueError("learning_rate and eps must be > 0")
        if self.grad_clip_norm is not None and not self.grad_clip_norm > 0:
            raise ValueError("grad_clip_norm must be > 0 (or None to disable)")

    def to_dict(self) -> dict:
        return asdict(self)


def huber(pred, target, delta: float = 1.0):
    """Elementwise Huber loss and its derivative w.r.t. ``pred``.

    Works on scalars and arrays; use :func:`huber_mean` for the batch loss.
    """
    r = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    a = np.abs(r)
    quad = a <= delta
    loss = np.where(quad, 0.5 * r * r, delta * (a - 0.5 * delta))
    grad = np.where(quad, r, delta * np.sign(r))
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


def huber_mean(pred, target, delta: float = 1.0):
    """Mean Huber loss over all elements and the gradient of that mean."""
    loss, grad = huber(np.atleast_1d(pred), np.atleast_1d(target), delta)
    n = loss.size
    return float(loss.mean()), grad / n


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, arrays) -> "AdamState":
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], 0)


def global_norm(arrays) -> float:
    return math.sqrt(sum(float(np.vdot(a, a)) for a in arrays))


def clip_by_global_norm(grads: list[np.ndarray], max_norm: float | None) -> list[np.ndarray]:
    if max_norm is None:
        return grads
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return [g * scale for g in grads]


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState, config: TrainConfig):
    """One Adam update on parallel lists of arrays. Updates ``params`` and ``state`` in place.

    Returns the (clipped) gradient list that was applied.
    """
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ValueError("parameter and gradient shapes disagree")
    if len(state.m) != len(params) or any(p.shape != m.shape for p, m in zip(params, state.m)):
        raise ValueError("optimizer state does not match parameter shapes")
    if not all(np.all(np.isfinite(g)) for g in grads):
        raise TrainingError(f"non-finite gradient at optimizer step {state.t + 1}")
    grads = clip_by_global_norm(grads, config.grad_clip_norm)
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.eps)
    return grads


@dataclass
class LossHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.train_loss)

    def append(self, train: float, val: float) -> None:
        self.train_loss.append(train)
        self.val_loss.append(val)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss"])
        for k, (tr, va) in enumerate(zip(self.train_loss, self.val_loss), start=1):
            w.writerow([k, repr(tr), repr(va)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "LossHistory":
        h = cls()
        for row in csv.DictReader(io.StringIO(text)):
            h.append(float(row["train_loss"]), float(row["val_loss"]))
        return h


def evaluate_loss(params: ModelParams, config: ModelConfig, data: WindowedDataset, delta: float, batch_size: int = 1024) -> float:
    """Full-pass infer-mode mean Huber loss over ``data``."""
    total = 0.0
    count = 0
    for lo in range(0, len(data), batch_size):
        pred, _ = forward(data.inputs[lo:lo + batch_size], params, config)
        loss, _ = huber(pred, data.targets[lo:lo + batch_size], delta)
        total += float(loss.sum())
        count += loss.size
    return total / count


def train_model(train: WindowedDataset, val: WindowedDataset, model_config: ModelConfig, train_config: TrainConfig,
                *, init: ModelParams | None = None, callback=None) -> tuple[ModelParams, LossHistory]:
    """Fit a model with minibatch Adam; returns final params and per-epoch losses.

    Everything random (initialization, shuffling, dropout masks) derives from
    ``train_config.seed``, so identical inputs give bit-identical results.
    """
    if len(train) == 0 or len(val) == 0:
        raise TrainingError("train and validation splits must be non-empty")
    if train.n_features != model_config.n_features or train.lookback != model_config.lookback:
        raise TrainingError(
            f"dataset (L={train.lookback}, F={train.n_features}) does not match model "
            f"(L={model_config.lookback}, F={model_config.n_features})"
        )
    seeds = np.random.SeedSequence(train_config.seed).spawn(2)
    init_seed = int(seeds[0].generate_state(1, dtype=np.uint64)[0])
    rng = np.random.default_rng(seeds[1])
    params = init.copy() if init is not None else init_params(model_config, init_seed)
    params.check(model_config)
    arrays = params.arrays()
    state = AdamState.zeros_like(arrays)
    history = LossHistory()
    n = len(train)
    delta = train_config.huber_delta

    for epoch in range(1, train_config.epochs + 1):
        order = rng.permutation(n) if train_config.shuffle else np.arange(n)
        for batch_no, lo in enumerate(range(0, n, train_config.batch_size)):
            idx = order[lo:lo + train_config.batch_size]
            mask_seed = int(rng.integers(0, 2**63))
            pred, cache = forward(train.inputs[idx], params, model_config, "train", mask_seed)
            loss, d_pred = huber_mean(pred, train.targets[idx], delta)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {batch_no}")
            grads = backward(cache, d_pred).arrays()
            try:
                adam_step(arrays, grads, state, train_config)
            except TrainingError as exc:
                raise TrainingError(f"{exc} (epoch {epoch}, batch {batch_no})") from None
        tr = evaluate_loss(params, model_config, train, delta)
        va = evaluate_loss(params, model_config, val, delta)
        if not (math.isfinite(tr) and math.isfinite(va)):
            raise TrainingError(f"non-finite loss after epoch {epoch}")
        history.append(tr, va)
        logger.debug("epoch %d train %.6g val %.6g", epoch, tr, va)
        if callback is not None:
            callback(epoch, tr, va)
    return params, history


MODEL_KEYS = {f.name for f in fields(ModelConfig)}
TRAIN_KEYS = {f.name for f in fields(TrainConfig)}


@dataclass(frozen=True)
class HyperGrid:
    """Candidate values per tunable; keys are ModelConfig or TrainConfig field names.

    Points are enumerated as the cartesian product in key insertion order.
    """

    candidates: dict[str, list[Any]]

    def __post_init__(self):
        unknown = set(self.candidates) - (MODEL_KEYS | TRAIN_KEYS)
        if unknown:
            raise ValueError(f"unknown grid key(s): {sorted(unknown)}")
        if "n_features" in self.candidates or "lookback" in self.candidates:
            raise ValueError("lookback and n_features are fixed by the dataset and cannot be gridded")
        if not self.candidates or any(len(v) == 0 for v in self.candidates.values()):
            raise ValueError("grid is empty")

    def points(self) -> list[dict[str, Any]]:
        keys = list(self.candidates)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.candidates[k] for k in keys))]


@dataclass
class GridEntry:
    rank_order: int
    point: dict[str, Any]
    val_loss: float | None
    status: str
    params: ModelParams | None = None
    history: LossHistory | None = None


@dataclass
class GridResult:
    best_model_config: ModelConfig
    best_train_config: TrainConfig
    best_val_loss: float
    leaderboard: list[GridEntry]

    @property
    def best(self) -> GridEntry:
        return self.leaderboard[0]

    def leaderboard_csv(self) -> str:
        keys = list(self.leaderboard[0].point) if self.leaderboard else []
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["order", *keys, "val_loss", "status"])
        for e in self.leaderboard:
            w.writerow([e.rank_order, *(e.point[k] for k in keys), "" if e.val_loss is None else repr(e.val_loss), e.status])
        return buf.getvalue()


def grid_search(grid: HyperGrid, train: WindowedDataset, val: WindowedDataset, base_model: ModelConfig,
                base_train: TrainConfig) -> GridResult:
    """Train one model per grid point and rank them by final validation loss.

    Ties go to the earlier point in enumeration order. A failing point is
    kept on the leaderboard with status ``failed: ...``; only if every point
    fails is an error raised.
    """
    entries = []
    for order, point in enumerate(grid.points()):
        model_kw = {k: v for k, v in point.items() if k in MODEL_KEYS}
        train_kw = {k: v for k, v in point.items() if k in TRAIN_KEYS}
        try:
            mc = replace(base_model, **model_kw)
            tc = replace(base_train, **train_kw)
            params, hist = train_model(train, val, mc, tc)
            entries.append(GridEntry(order, point, hist.val_loss[-1], "ok", params, hist))
        except (TrainingError, ValueError, FloatingPointError) as exc:
            logger.warning("grid point %s failed: %s", point, exc)
            entries.append(GridEntry(order, point, None, f"failed: {exc}"))
    ok = sorted((e for e in entries if e.status == "ok"), key=lambda e: (e.val_loss, e.rank_order))
    failed = [e for e in entries if e.status != "ok"]
    if not ok:
        raise TrainingError(f"all {len(entries)} grid points failed")
    best = ok[0]
    mc = replace(base_model, **{k: v for k, v in best.point.items() if k in MODEL_KEYS})
    tc = replace(base_train, **{k: v for k, v in best.point.items() if k in TRAIN_KEYS})
    return GridResult(mc, tc, best.val_loss, ok + failed)
