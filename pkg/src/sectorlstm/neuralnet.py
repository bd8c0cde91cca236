"""Stacked LSTM regressor: parameters, forward pass with inverted dropout, BPTT.

Architecture: ``num_lstm_layers`` LSTM layers (each layer's full hidden
sequence feeds the next; the last layer's final hidden state feeds the head),
then a ReLU dense layer and a sigmoid output layer of width ``horizon``.
Dropout is applied to each LSTM layer's output in train mode.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .dataset import FeatureSpec, ScalerParams

GATES = ("i", "f", "c", "o")


@dataclass(frozen=True)
class ModelConfig:
    lookback: int = 50
    n_features: int = 1
    hidden_units: int = 256
    num_lstm_layers: int = 2
    dropout: float = 0.3
    dense_units: int = 256
    horizon: int = 1

    def __post_init__(self):
        for name in ("lookback", "n_features", "hidden_units", "num_lstm_layers", "dense_units", "horizon"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if not 0 <= self.dropout < 1:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LstmLayerParams:
    """Gate-stacked weights: ``w[g]`` is W_g (H x F_in), ``u[g]`` is U_g (H x H), ``b[g]`` is b_g."""

    w: np.ndarray  # (4, H, F_in)
    u: np.ndarray  # (4, H, H)
    b: np.ndarray  # (4, H)

    def __post_init__(self):
        if self.w.ndim != 3 or self.w.shape[0] != 4:
            raise ValueError(f"w must have shape (4, H, F_in), got {self.w.shape}")
        hidden = self.w.shape[1]
        if hidden < 1 or self.u.shape != (4, hidden, hidden) or self.b.shape != (4, hidden):
            raise ValueError(f"inconsistent gate shapes w={self.w.shape} u={self.u.shape} b={self.b.shape}")

    @property
    def hidden(self) -> int:
        return self.w.shape[1]

    @property
    def input_width(self) -> int:
        return self.w.shape[2]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        k = GATES.index(name)
        return self.w[k], self.u[k], self.b[k]

    # flat stacked views used by the kernels
    @property
    def w_stack(self) -> np.ndarray:
        return self.w.reshape(4 * self.hidden, self.input_width)

    @property
    def u_stack(self) -> np.ndarray:
        return self.u.reshape(4 * self.hidden, self.hidden)

    @property
    def b_stack(self) -> np.ndarray:
        return self.b.reshape(4 * self.hidden)


@dataclass
class DenseParams:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)


@dataclass
class ModelParams:
    lstm_layers: list[LstmLayerParams]
    hidden_dense: DenseParams
    output_head: DenseParams

    def arrays(self) -> list[np.ndarray]:
        """All parameter arrays in a fixed canonical order."""
        out = []
        for layer in self.lstm_layers:
            out += [layer.w, layer.u, layer.b]
        out += [self.hidden_dense.weights, self.hidden_dense.bias, self.output_head.weights, self.output_head.bias]
        return out

    def names(self) -> list[str]:
        out = []
        for k in range(len(self.lstm_layers)):
            out += [f"lstm{k}.w", f"lstm{k}.u", f"lstm{k}.b"]
        return out + ["dense.weights", "dense.bias", "head.weights", "head.bias"]

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray], num_lstm_layers: int) -> "ModelParams":
        arrays = list(arrays)
        layers = [LstmLayerParams(*arrays[3 * k:3 * k + 3]) for k in range(num_lstm_layers)]
        rest = arrays[3 * num_lstm_layers:]
        return cls(layers, DenseParams(rest[0], rest[1]), DenseParams(rest[2], rest[3]))

    def copy(self) -> "ModelParams":
        return ModelParams.from_arrays([a.copy() for a in self.arrays()], len(self.lstm_layers))

    def zeros_like(self) -> "ModelParams":
        return ModelParams.from_arrays([np.zeros_like(a) for a in self.arrays()], len(self.lstm_layers))

    def check(self, config: ModelConfig) -> None:
        """Raise ValueError unless the shapes agree with ``config``."""
        if len(self.lstm_layers) != config.num_lstm_layers:
            raise ValueError("layer count does not match config")
        width = config.n_features
        for k, layer in enumerate(self.lstm_layers):
            if layer.input_width != width or layer.hidden != config.hidden_units:
                raise ValueError(f"lstm layer {k} has shape {layer.w.shape}, expected (4, {config.hidden_units}, {width})")
            width = layer.hidden
        if self.hidden_dense.weights.shape != (config.dense_units, width):
            raise ValueError("hidden dense shape does not match config")
        if self.output_head.weights.shape != (config.horizon, config.dense_units):
            raise ValueError("output head shape does not match config")


@dataclass
class TrainedModel:
    """Everything needed to turn a raw price window into a forecast."""

    config: ModelConfig
    params: ModelParams
    scaler: ScalerParams | None = None
    features: FeatureSpec = field(default_factory=FeatureSpec)


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases, forget-gate biases 1.0. Deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    layers = []
    width = config.n_features
    hidden = config.hidden_units
    for _ in range(config.num_lstm_layers):
        w = np.stack([_glorot(rng, hidden, width) for _ in GATES])
        u = np.stack([_glorot(rng, hidden, hidden) for _ in GATES])
        b = np.zeros((4, hidden))
        b[GATES.index("f")] = 1.0
        layers.append(LstmLayerParams(w, u, b))
        width = hidden
    dense = DenseParams(_glorot(rng, config.dense_units, width), np.zeros(config.dense_units))
    head = DenseParams(_glorot(rng, config.horizon, config.dense_units), np.zeros(config.horizon))
    return ModelParams(layers, dense, head)


def sigmoid(z):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


def lstm_cell(x_t, h_prev, c_prev, params: LstmLayerParams):
    """One LSTM step. Works on single vectors or on a leading batch axis."""
    x_t = np.asarray(x_t, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    if x_t.shape[-1] != params.input_width or h_prev.shape[-1] != params.hidden or c_prev.shape != h_prev.shape:
        raise ValueError(
            f"shape mismatch: x {x_t.shape}, h {h_prev.shape}, c {c_prev.shape} for layer "
            f"(H={params.hidden}, F_in={params.input_width})"
        )

    def pre(name):
        w, u, b = params.gate(name)
        return x_t @ w.T + h_prev @ u.T + b

    i = sigmoid(pre("i"))
    f = sigmoid(pre("f"))
    g = np.tanh(pre("c"))
    o = sigmoid(pre("o"))
    c_t = f * c_prev + i * g
    h_t = o * np.tanh(c_t)
    return h_t, c_t


@dataclass
class _LayerCache:
    inputs: np.ndarray
    hs: np.ndarray
    cs: np.ndarray
    gates: np.ndarray
    mask: np.ndarray | None


@dataclass
class ForwardCache:
    params: ModelParams
    layers: list[_LayerCache]
    head_input: np.ndarray
    dense_pre: np.ndarray
    dense_out: np.ndarray
    predictions: np.ndarray


def forward(batch, params: ModelParams, config: ModelConfig, mode: str = "infer", rng_seed=None, *, kernels=None):
    """Run the network on a (B, L, F) batch of scaled inputs.

    Returns ``(predictions, cache)``; ``cache`` is None in infer mode.
    In train mode with dropout > 0 the masks are drawn from
    ``np.random.default_rng(rng_seed)``.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != config.n_features:
        raise ValueError(f"expected batch of shape (B, L, {config.n_features}), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite values in input batch")
    k = kernels or _kernels
    train = mode == "train"
    p = config.dropout
    rng = np.random.default_rng(rng_seed) if train and p > 0 else None

    caches = []
    seq = x
    n_layers = len(params.lstm_layers)
    for idx, layer in enumerate(params.lstm_layers):
        hs, cs, gates = k.lstm_forward(seq, layer.w_stack, layer.u_stack, layer.b_stack)
        out = hs[:, -1, :] if idx == n_layers - 1 else hs
        mask = None
        if rng is not None:
            mask = (rng.random(out.shape) >= p) / (1.0 - p)
            out = out * mask
        if train:
            caches.append(_LayerCache(seq, hs, cs, gates, mask))
        seq = out

    dense_pre = seq @ params.hidden_dense.weights.T + params.hidden_dense.bias
    dense_out = np.maximum(dense_pre, 0.0)
    predictions = sigmoid(dense_out @ params.output_head.weights.T + params.output_head.bias)
    if not train:
        return predictions, None
    return predictions, ForwardCache(params, caches, seq, dense_pre, dense_out, predictions)


def backward(cache: ForwardCache, d_pred, *, kernels=None) -> ModelParams:
    """Gradients of ``sum(d_pred * predictions)`` w.r.t. every parameter."""
    if cache is None:
        raise ValueError("backward needs the cache of a train-mode forward pass")
    d_pred = np.asarray(d_pred, dtype=np.float64)
    if d_pred.shape != cache.predictions.shape:
        raise ValueError(f"upstream gradient shape {d_pred.shape} != predictions {cache.predictions.shape}")
    k = kernels or _kernels
    params = cache.params
    pred = cache.predictions

    d_logits = d_pred * pred * (1.0 - pred)
    head = DenseParams(d_logits.T @ cache.dense_out, d_logits.sum(axis=0))
    d_dense = (d_logits @ params.output_head.weights) * (cache.dense_pre > 0)
    dense = DenseParams(d_dense.T @ cache.head_input, d_dense.sum(axis=0))
    d_seq = d_dense @ params.hidden_dense.weights

    grads: list[LstmLayerParams] = []
    n_layers = len(params.lstm_layers)
    for idx in range(n_layers - 1, -1, -1):
        layer = params.lstm_layers[idx]
        lc = cache.layers[idx]
        if lc.mask is not None:
            d_seq = d_seq * lc.mask
        if idx == n_layers - 1:
            d_hs = np.zeros_like(lc.hs)
            d_hs[:, -1, :] = d_seq
        else:
            d_hs = d_seq
        dx, dw, du, db = k.lstm_backward(lc.inputs, layer.w_stack, layer.u_stack, lc.hs, lc.cs, lc.gates, d_hs)
        hidden = layer.hidden
        grads.append(LstmLayerParams(
            dw.reshape(4, hidden, layer.input_width), du.reshape(4, hidden, hidden), db.reshape(4, hidden)
        ))
        d_seq = dx
    grads.reverse()
    return ModelParams(grads, dense, head)


def predict_scaled(model: TrainedModel, inputs: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    """Infer-mode predictions (N, h) for already-scaled inputs."""
    out = [forward(inputs[i:i + batch_size], model.params, model.config)[0] for i in range(0, len(inputs), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, model.config.horizon))


def predict_next(model: TrainedModel, window, scaler: ScalerParams | None = None) -> float:
    """Forecast the close ``horizon`` days after the last bar of ``window``.

    ``window`` is either a sequence of exactly L OHLCV bars or a raw
    (L, F) feature array in the model's feature order.
    """
    scaler = scaler or model.scaler
    if scaler is None:
        raise ValueError("a scaler is required to forecast prices")
    if isinstance(window, np.ndarray):
        raw = np.asarray(window, dtype=np.float64)
        if raw.ndim == 1:
            raw = raw[:, None]
    else:
        raw = np.array([[getattr(b, f) for f in model.features.features] for b in window], dtype=np.float64)
    if raw.shape[0] != model.config.lookback:
        raise ValueError(f"window has {raw.shape[0]} bars, model needs exactly {model.config.lookback}")
    if raw.shape[1] != model.config.n_features:
        raise ValueError(f"window has {raw.shape[1]} features, model needs {model.config.n_features}")
    scaled = scaler.transform_matrix(raw)[None]
    pred, _ = forward(scaled, model.params, model.config)
    return float(scaler.inverse_transform(pred[0, -1], model.features.target))
