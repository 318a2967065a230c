"""GRU and LSTM cells with hand-written backward passes.

Weights act on the concatenation ``[h, x]`` (state first). Each gate has its
own matrix of shape ``(hidden, hidden + input)`` and bias of shape
``(hidden,)``. Batched arrays use rows for samples.
"""

from __future__ import annotations

import numpy as np

from ..errors import InputError

GRU_GATES = ("z", "r", "h")
LSTM_GATES = ("i", "f", "o", "g")


def sigmoid(x):
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _check(x: np.ndarray, h: np.ndarray, W: np.ndarray) -> None:
    if x.ndim != h.ndim or (x.ndim == 2 and x.shape[0] != h.shape[0]):
        raise InputError(f"input {x.shape} and state {h.shape} do not match")
    if W.shape != (h.shape[-1], h.shape[-1] + x.shape[-1]):
        raise InputError(f"weights {W.shape} do not fit state {h.shape[-1]} + input {x.shape[-1]}")


# -- GRU -------------------------------------------------------------------

def gru_step(x, h, p):
    """One GRU step; returns (new state, cache for ``gru_step_backward``)."""
    a = np.concatenate([h, x], axis=-1)
    z = sigmoid(a @ p["W_z"].T + p["b_z"])
    r = sigmoid(a @ p["W_r"].T + p["b_r"])
    a2 = np.concatenate([r * h, x], axis=-1)
    hc = np.tanh(a2 @ p["W_h"].T + p["b_h"])
    h_new = (1.0 - z) * h + z * hc
    return h_new, (h, a, a2, z, r, hc)


def gru_step_backward(dh_new, cache, p, grads):
    """Accumulate parameter grads into ``grads``; return (dh_prev, dx)."""
    h, a, a2, z, r, hc = cache
    H = h.shape[-1]
    dz = dh_new * (hc - h)
    dh = dh_new * (1.0 - z)
    dhc = dh_new * z * (1.0 - hc * hc)
    grads["W_h"] += dhc.T @ a2
    grads["b_h"] += dhc.sum(axis=0)
    da2 = dhc @ p["W_h"]
    drh = da2[:, :H]
    dx = da2[:, H:].copy()
    dh += drh * r
    dr = drh * h * r * (1.0 - r)
    dz = dz * z * (1.0 - z)
    grads["W_z"] += dz.T @ a
    grads["b_z"] += dz.sum(axis=0)
    grads["W_r"] += dr.T @ a
    grads["b_r"] += dr.sum(axis=0)
    da = dz @ p["W_z"] + dr @ p["W_r"]
    dh += da[:, :H]
    dx += da[:, H:]
    return dh, dx


def gru_cell_forward(x, h, params) -> np.ndarray:
    """GRU state update for one input vector (or a batch of rows).

    z = sigmoid(W_z [h, x] + b_z), r = sigmoid(W_r [h, x] + b_r),
    candidate = tanh(W_h [r * h, x] + b_h), h' = (1 - z) h + z candidate.
    """
    x = np.asarray(x, dtype=float)
    h = np.asarray(h, dtype=float)
    _check(x, h, np.asarray(params["W_z"]))
    return gru_step(x, h, params)[0]


# -- LSTM ------------------------------------------------------------------

def lstm_step(x, h, c, p):
    a = np.concatenate([h, x], axis=-1)
    i = sigmoid(a @ p["W_i"].T + p["b_i"])
    f = sigmoid(a @ p["W_f"].T + p["b_f"])
    o = sigmoid(a @ p["W_o"].T + p["b_o"])
    g = np.tanh(a @ p["W_g"].T + p["b_g"])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (a, c, i, f, o, g, tc)


def lstm_step_backward(dh_new, dc_new, cache, p, grads):
    """Return (dh_prev, dc_prev, dx)."""
    a, c, i, f, o, g, tc = cache
    H = c.shape[-1]
    dc = dc_new + dh_new * o * (1.0 - tc * tc)
    pre = {
        "o": dh_new * tc * o * (1.0 - o),
        "i": dc * g * i * (1.0 - i),
        "f": dc * c * f * (1.0 - f),
        "g": dc * i * (1.0 - g * g),
    }
    da = 0.0
    for k, d in pre.items():
        grads["W_" + k] += d.T @ a
        grads["b_" + k] += d.sum(axis=0)
        da = da + d @ p["W_" + k]
    return da[:, :H], dc * f, da[:, H:]


def lstm_cell_forward(x, state, params) -> tuple[np.ndarray, np.ndarray]:
    """LSTM update ``(h, c) -> (h', c')`` with c' = f c + i g, h' = o tanh(c')."""
    h, c = state
    x = np.asarray(x, dtype=float)
    h = np.asarray(h, dtype=float)
    c = np.asarray(c, dtype=float)
    _check(x, h, np.asarray(params["W_i"]))
    if c.shape != h.shape:
        raise InputError(f"cell state {c.shape} does not match hidden state {h.shape}")
    h_new, c_new, _ = lstm_step(x, h, c, params)
    return h_new, c_new
