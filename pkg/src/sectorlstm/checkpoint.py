"""Versioned binary model checkpoints.

Layout::

    b"SLSTMCKP"                  8-byte magic
    uint32 little-endian         format version
    uint64 little-endian         header length in bytes
    header                       UTF-8 JSON (sorted keys): config, features,
                                 scaler, and an array table of
                                 {name, shape, offset, nbytes}
    payload                      float64 little-endian C-order array data

The same model always serializes to the same bytes, and loading restores
every array bit for bit.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .dataset import FeatureSpec, ScalerParams
from .neuralnet import ModelConfig, ModelParams, TrainedModel

MAGIC = b"SLSTMCKP"
VERSION = 1
_DTYPE = np.dtype("<f8")


class CheckpointError(ValueError):
    pass


def dumps(model: TrainedModel, extra: dict | None = None) -> bytes:
    arrays = model.params.arrays()
    table = []
    offset = 0
    for name, arr in zip(model.params.names(), arrays):
        nbytes = arr.size * _DTYPE.itemsize
        table.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": nbytes})
        offset += nbytes
    header = {
        "config": model.config.to_dict(),
        "features": list(model.features.features),
        "scaler": None if model.scaler is None else model.scaler.to_dict(),
        "arrays": table,
        "extra": extra or {},
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(a, dtype=_DTYPE).tobytes() for a in arrays)
    return MAGIC + struct.pack("<IQ", VERSION, len(head)) + head + payload


def loads(blob: bytes) -> tuple[TrainedModel, dict]:
    if blob[:8] != MAGIC:
        raise CheckpointError("not a sectorlstm checkpoint (bad magic)")
    version, head_len = struct.unpack("<IQ", blob[8:20])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(blob[20:20 + head_len].decode("utf-8"))
    payload = memoryview(blob)[20 + head_len:]
    arrays = []
    for entry in header["arrays"]:
        lo, hi = entry["offset"], entry["offset"] + entry["nbytes"]
        if hi > len(payload):
            raise CheckpointError(f"truncated checkpoint: array {entry['name']}")
        arrays.append(np.frombuffer(payload[lo:hi], dtype=_DTYPE).reshape(entry["shape"]).astype(np.float64))
    config = ModelConfig(**header["config"])
    params = ModelParams.from_arrays(arrays, config.num_lstm_layers)
    params.check(config)
    scaler = None if header["scaler"] is None else ScalerParams.from_dict(header["scaler"])
    return TrainedModel(config, params, scaler, FeatureSpec(tuple(header["features"]))), header.get("extra", {})


def save_model(path: str | Path, model: TrainedModel, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(model, extra))
    return path


def load_model(path: str | Path) -> TrainedModel:
    return loads(Path(path).read_bytes())[0]
