"""LSTM sequence kernels with a compiled fast path.

The Cython extension is used when it was built; otherwise the numpy
implementation is loaded. Set ``SECTORLSTM_PURE_PYTHON=1`` to force the
fallback.
"""
import os

from . import _lstm_py

AVAILABLE = {"python": _lstm_py}

try:
    from . import _lstm_ext
except ImportError:
    _lstm_ext = None
else:
    AVAILABLE["cython"] = _lstm_ext

if _lstm_ext is not None and not os.environ.get("SECTORLSTM_PURE_PYTHON"):
    BACKEND = "cython"
else:
    BACKEND = "python"

_active = AVAILABLE[BACKEND]
lstm_forward = _active.lstm_forward
lstm_backward = _active.lstm_backward


def get_backend(name: str):
    """Return the kernel module registered under ``name`` ('cython' or 'python')."""
    try:
        return AVAILABLE[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} not available; have {sorted(AVAILABLE)}") from None


__all__ = ["AVAILABLE", "BACKEND", "get_backend", "lstm_forward", "lstm_backward"]
