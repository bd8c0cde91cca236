"""Pure-numpy LSTM sequence kernels.

Both functions operate on a whole layer over the whole sequence. Gate blocks
are stacked along the last axis in the order input, forget, candidate, output.

Shapes
------
x      : (B, T, F)  layer input
w      : (4H, F)    stacked input weights
u      : (4H, H)    stacked recurrent weights
b      : (4H,)      stacked biases
hs, cs : (B, T, H)  hidden and cell states per step
gates  : (B, T, 4H) post-activation gate values
"""
import numpy as np


def _sigmoid(z):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


def lstm_forward(x, w, u, b):
    batch, steps, _ = x.shape
    hidden = u.shape[1]
    gates = x @ w.T + b
    hs = np.empty((batch, steps, hidden))
    cs = np.empty((batch, steps, hidden))
    h_prev = np.zeros((batch, hidden))
    c_prev = np.zeros((batch, hidden))
    for t in range(steps):
        z = gates[:, t, :]
        if t > 0:
            z += h_prev @ u.T
        i = _sigmoid(z[:, :hidden])
        f = _sigmoid(z[:, hidden:2 * hidden])
        g = np.tanh(z[:, 2 * hidden:3 * hidden])
        o = _sigmoid(z[:, 3 * hidden:])
        c_prev = f * c_prev + i * g
        h_prev = o * np.tanh(c_prev)
        z[:, :hidden] = i
        z[:, hidden:2 * hidden] = f
        z[:, 2 * hidden:3 * hidden] = g
        z[:, 3 * hidden:] = o
        hs[:, t, :] = h_prev
        cs[:, t, :] = c_prev
    return hs, cs, gates


def lstm_backward(x, w, u, hs, cs, gates, dhs):
    """Backpropagate ``dhs`` (gradient w.r.t. every emitted hidden state).

    Returns ``(dx, dw, du, db)``.
    """
    batch, steps, _ = x.shape
    hidden = u.shape[1]
    dz = np.empty_like(gates)
    dh_next = np.zeros((batch, hidden))
    dc_next = np.zeros((batch, hidden))
    for t in range(steps - 1, -1, -1):
        i = gates[:, t, :hidden]
        f = gates[:, t, hidden:2 * hidden]
        g = gates[:, t, 2 * hidden:3 * hidden]
        o = gates[:, t, 3 * hidden:]
        tc = np.tanh(cs[:, t, :])
        dh = dhs[:, t, :] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        c_prev = cs[:, t - 1, :] if t > 0 else 0.0
        dz[:, t, :hidden] = dc * g * i * (1.0 - i)
        dz[:, t, hidden:2 * hidden] = dc * c_prev * f * (1.0 - f)
        dz[:, t, 2 * hidden:3 * hidden] = dc * i * (1.0 - g * g)
        dz[:, t, 3 * hidden:] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = dz[:, t, :] @ u
    dx = dz @ w
    dw = np.tensordot(dz, x, axes=([0, 1], [0, 1]))
    du = np.tensordot(dz[:, 1:, :], hs[:, :-1, :], axes=([0, 1], [0, 1]))
    db = dz.sum(axis=(0, 1))
    return dx, dw, du, db
