"""Vanilla RNN and LSTM cells with exact backpropagation through time.

Sequence functions are time-major: ``xs`` has shape ``(T, B, D)``. A 2-D
``(T, D)`` input is treated as a batch of one and the outputs are squeezed
back. Every forward returns a tape (a plain dataclass holding the stored
activations) that its ``*_backward`` counterpart consumes.
"""

from __future__ import annotations

from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ShapeError
from .numerics import DTYPE, param_init, sigmoid

GATES = ("i", "f", "o", "g")


class _CellCounter:
    """Counts cell evaluations per sequence, keyed by a caller-chosen tag."""

    def __init__(self):
        self.counts: Counter[str] = Counter()

    def add(self, tag: str, n: int) -> None:
        self.counts[tag] += n

    def reset(self) -> None:
        self.counts.clear()

    @property
    def total(self) -> int:
        return sum(self.counts.values())


cell_counter = _CellCounter()


@contextmanager
def counting_cells():
    """Reset the global cell counter and yield it."""
    cell_counter.reset()
    yield cell_counter


def lstm_param_names() -> list[str]:
    """Names of the 12 LSTM tensors, e.g. ``W_ix``, ``W_ih``, ``b_i``."""
    out = []
    for gate in GATES:
        out += [f"W_{gate}x", f"W_{gate}h", f"b_{gate}"]
    return out


def lstm_param_shapes(input_dim: int, hidden: int) -> dict[str, tuple[int, ...]]:
    shapes = {}
    for gate in GATES:
        shapes[f"W_{gate}x"] = (hidden, input_dim)
        shapes[f"W_{gate}h"] = (hidden, hidden)
        shapes[f"b_{gate}"] = (hidden,)
    return shapes


def init_lstm_params(rng, input_dim: int, hidden: int, scale: float = 0.08,
                     forget_bias: float = 1.0) -> dict[str, np.ndarray]:
    params = {}
    for name, shape in lstm_param_shapes(input_dim, hidden).items():
        if name.startswith("b_"):
            params[name] = np.zeros(shape, dtype=DTYPE)
        else:
            params[name] = param_init(rng, shape, scale)
    params["b_f"][:] = forget_bias
    return params


def _stack(params):
    try:
        Wx = np.concatenate([params[f"W_{g}x"] for g in GATES], axis=0)
        Wh = np.concatenate([params[f"W_{g}h"] for g in GATES], axis=0)
        b = np.concatenate([params[f"b_{g}"] for g in GATES], axis=0)
    except ValueError as exc:
        raise ShapeError(f"inconsistent LSTM gate shapes: {exc}") from None
    H = Wh.shape[1]
    if Wh.shape != (4 * H, H) or b.shape != (4 * H,) or Wx.shape[0] != 4 * H:
        raise ShapeError(f"inconsistent LSTM shapes Wx={Wx.shape} Wh={Wh.shape} b={b.shape}")
    return Wx, Wh, b


def _unstack(dWx, dWh, db):
    H = dWh.shape[1]
    grads = {}
    for k, g in enumerate(GATES):
        sl = slice(k * H, (k + 1) * H)
        grads[f"W_{g}x"] = dWx[sl].copy()
        grads[f"W_{g}h"] = dWh[sl].copy()
        grads[f"b_{g}"] = db[sl].copy()
    return grads


class LstmState(NamedTuple):
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden: int, batch: int | None = None) -> "LstmState":
        shape = (hidden,) if batch is None else (batch, hidden)
        return cls(np.zeros(shape, dtype=DTYPE), np.zeros(shape, dtype=DTYPE))


# --------------------------------------------------------------------------
# Vanilla RNN


def rnn_step(params, x, h_prev):
    """One Elman step: ``h = tanh(W_hx x + W_hh h_prev)``, ``z = W_zh h``."""
    W_hx, W_hh, W_zh = params["W_hx"], params["W_hh"], params["W_zh"]
    x = np.asarray(x, dtype=DTYPE)
    h_prev = np.asarray(h_prev, dtype=DTYPE)
    if (x.shape[-1] != W_hx.shape[1] or h_prev.shape[-1] != W_hh.shape[1]
            or W_hh.shape[0] != W_hx.shape[0] or W_zh.shape[1] != W_hh.shape[0]):
        raise ShapeError(
            f"rnn_step: W_hx {W_hx.shape}, W_hh {W_hh.shape}, W_zh {W_zh.shape}, "
            f"x {x.shape}, h_prev {h_prev.shape}"
        )
    h = np.tanh(x @ W_hx.T + h_prev @ W_hh.T)
    return h, h @ W_zh.T


@dataclass
class RnnTape:
    xs: np.ndarray
    hs: np.ndarray
    h0: np.ndarray


def rnn_forward(params, xs, h0=None):
    """Run ``rnn_step`` over ``xs`` (T, B, D). Returns ``(hs, zs, tape)``."""
    xs = np.asarray(xs, dtype=DTYPE)
    T, B = xs.shape[:2]
    H = params["W_hh"].shape[0]
    h = np.zeros((B, H), dtype=DTYPE) if h0 is None else np.asarray(h0, dtype=DTYPE)
    h_init = h
    hs = np.zeros((T, B, H), dtype=DTYPE)
    zs = np.zeros((T, B, params["W_zh"].shape[0]), dtype=DTYPE)
    for t in range(T):
        h, zs[t] = rnn_step(params, xs[t], h)
        hs[t] = h
    cell_counter.add("rnn", T * B)
    return hs, zs, RnnTape(xs, hs, h_init)


def rnn_backward(params, tape: RnnTape, dzs, dhs=None):
    """BPTT for ``rnn_forward``. Returns ``(grads, dxs, dh0)``."""
    W_hx, W_hh, W_zh = params["W_hx"], params["W_hh"], params["W_zh"]
    xs, hs = tape.xs, tape.hs
    T = xs.shape[0]
    grads = {k: np.zeros_like(params[k]) for k in ("W_hx", "W_hh", "W_zh")}
    dxs = np.zeros_like(xs)
    dh_next = np.zeros_like(tape.h0)
    for t in reversed(range(T)):
        grads["W_zh"] += dzs[t].T @ hs[t]
        dh = dzs[t] @ W_zh + dh_next
        if dhs is not None:
            dh = dh + dhs[t]
        da = dh * (1.0 - hs[t] ** 2)
        h_prev = hs[t - 1] if t > 0 else tape.h0
        grads["W_hx"] += da.T @ xs[t]
        grads["W_hh"] += da.T @ h_prev
        dxs[t] = da @ W_hx
        dh_next = da @ W_hh
    return grads, dxs, dh_next


# --------------------------------------------------------------------------
# LSTM


@dataclass
class LstmStepCache:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    tanh_c: np.ndarray


def _cell(pre, c_prev):
    H = c_prev.shape[-1]
    i = sigmoid(pre[..., :H])
    f = sigmoid(pre[..., H:2 * H])
    o = sigmoid(pre[..., 2 * H:3 * H])
    g = np.tanh(pre[..., 3 * H:])
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    return i, f, o, g, c, o * tanh_c, tanh_c


def lstm_step(params, x, state: LstmState, stacked=None):
    """One LSTM step. Returns ``(new_state, cache)``.

    ``stacked`` may carry the pre-concatenated ``(Wx, Wh, b)`` to skip the
    per-call concatenation inside loops.
    """
    Wx, Wh, b = stacked if stacked is not None else _stack(params)
    x = np.asarray(x, dtype=DTYPE)
    h_prev, c_prev = state
    if x.shape[-1] != Wx.shape[1] or h_prev.shape[-1] != Wh.shape[1] or c_prev.shape != h_prev.shape:
        raise ShapeError(
            f"lstm_step: Wx {Wx.shape}, Wh {Wh.shape}, x {x.shape}, "
            f"h {h_prev.shape}, c {c_prev.shape}"
        )
    pre = x @ Wx.T + h_prev @ Wh.T + b
    i, f, o, g, c, h, tanh_c = _cell(pre, c_prev)
    return LstmState(h, c), LstmStepCache(x, h_prev, c_prev, i, f, o, g, tanh_c)


def lstm_step_backward(params, cache: LstmStepCache, dh, dc, stacked=None, grads=None):
    """Backward of ``lstm_step``. Returns ``(grads, dx, dh_prev, dc_prev)``.

    ``grads`` holds stacked accumulators ``[dWx, dWh, db]`` updated in place;
    when omitted a fresh set is created and unstacked into named tensors.
    """
    Wx, Wh, b = stacked if stacked is not None else _stack(params)
    fresh = grads is None
    if fresh:
        grads = [np.zeros_like(Wx), np.zeros_like(Wh), np.zeros_like(b)]
    cc = cache
    dc_tot = dc + dh * cc.o * (1.0 - cc.tanh_c ** 2)
    da = np.concatenate([
        dc_tot * cc.g * cc.i * (1.0 - cc.i),
        dc_tot * cc.c_prev * cc.f * (1.0 - cc.f),
        dh * cc.tanh_c * cc.o * (1.0 - cc.o),
        dc_tot * cc.i * (1.0 - cc.g ** 2),
    ], axis=-1)
    da2 = da.reshape(-1, da.shape[-1])
    grads[0] += da2.T @ cc.x.reshape(-1, Wx.shape[1])
    grads[1] += da2.T @ cc.h_prev.reshape(-1, Wh.shape[1])
    grads[2] += da2.sum(axis=0)
    dx = da @ Wx
    dh_prev = da @ Wh
    dc_prev = dc_tot * cc.f
    if fresh:
        grads = _unstack(*grads)
    return grads, dx, dh_prev, dc_prev


@dataclass
class LstmTape:
    xs: np.ndarray
    h0: np.ndarray
    c0: np.ndarray
    hs: np.ndarray
    cs: np.ndarray
    gates: np.ndarray  # (T, B, 4H) post-activation i, f, o, g
    tanh_cs: np.ndarray
    squeeze: bool


def lstm_forward(params, xs, init: LstmState | None = None, tag: str = "lstm"):
    """Iterate ``lstm_step`` over ``xs``.

    Returns ``(hs, cs, tape)`` where ``hs[t]``, ``cs[t]`` are the state after
    consuming ``xs[t]``. An empty sequence returns empty arrays and the tape
    remembers ``init`` as the final state.
    """
    Wx, Wh, b = _stack(params)
    H = Wh.shape[1]
    xs = np.asarray(xs, dtype=DTYPE)
    squeeze = xs.ndim == 2
    if squeeze:
        xs = xs[:, None, :]
    if xs.ndim != 3 or xs.shape[-1] != Wx.shape[1]:
        raise ShapeError(f"lstm_forward: inputs {xs.shape} vs W_x {Wx.shape}")
    T, B = xs.shape[:2]
    if init is None:
        h0 = np.zeros((B, H), dtype=DTYPE)
        c0 = np.zeros((B, H), dtype=DTYPE)
    else:
        h0 = np.asarray(init.h, dtype=DTYPE).reshape(B, H)
        c0 = np.asarray(init.c, dtype=DTYPE).reshape(B, H)
    hs = np.zeros((T, B, H), dtype=DTYPE)
    cs = np.zeros((T, B, H), dtype=DTYPE)
    gates = np.zeros((T, B, 4 * H), dtype=DTYPE)
    tanh_cs = np.zeros((T, B, H), dtype=DTYPE)
    x_pre = xs @ Wx.T + b
    h, c = h0, c0
    for t in range(T):
        i, f, o, g, c, h, tanh_c = _cell(x_pre[t] + h @ Wh.T, c)
        hs[t], cs[t], tanh_cs[t] = h, c, tanh_c
        gates[t] = np.concatenate([i, f, o, g], axis=-1)
    cell_counter.add(tag, T * B)
    tape = LstmTape(xs, h0, c0, hs, cs, gates, tanh_cs, squeeze)
    if squeeze:
        return hs[:, 0], cs[:, 0], tape
    return hs, cs, tape


def final_state(tape: LstmTape) -> LstmState:
    if tape.hs.shape[0] == 0:
        h, c = tape.h0, tape.c0
    else:
        h, c = tape.hs[-1], tape.cs[-1]
    if tape.squeeze:
        return LstmState(h[0], c[0])
    return LstmState(h, c)


def lstm_backward(params, tape: LstmTape, dhs, dh_last=None, dc_last=None):
    """BPTT through ``lstm_forward``.

    ``dhs`` is the loss gradient w.r.t. every returned hidden state (same
    shape as ``hs``); ``dh_last``/``dc_last`` optionally add gradient on the
    final state. Returns ``(grads, dxs, dinit)`` with ``dinit`` an LstmState.
    """
    Wx, Wh, _ = _stack(params)
    H = Wh.shape[1]
    T, B = tape.xs.shape[:2]
    dhs = np.asarray(dhs, dtype=DTYPE).reshape(T, B, H)
    dh = np.zeros((B, H)) if dh_last is None else np.asarray(dh_last, dtype=DTYPE).reshape(B, H).copy()
    dc = np.zeros((B, H)) if dc_last is None else np.asarray(dc_last, dtype=DTYPE).reshape(B, H).copy()
    da_all = np.zeros((T, B, 4 * H), dtype=DTYPE)
    for t in reversed(range(T)):
        dh = dh + dhs[t]
        gt = tape.gates[t]
        i, f, o, g = gt[:, :H], gt[:, H:2 * H], gt[:, 2 * H:3 * H], gt[:, 3 * H:]
        tanh_c = tape.tanh_cs[t]
        c_prev = tape.cs[t - 1] if t > 0 else tape.c0
        dc_tot = dc + dh * o * (1.0 - tanh_c ** 2)
        da = da_all[t]
        da[:, :H] = dc_tot * g * i * (1.0 - i)
        da[:, H:2 * H] = dc_tot * c_prev * f * (1.0 - f)
        da[:, 2 * H:3 * H] = dh * tanh_c * o * (1.0 - o)
        da[:, 3 * H:] = dc_tot * i * (1.0 - g ** 2)
        dh = da @ Wh
        dc = dc_tot * f
    h_prevs = np.concatenate([tape.h0[None], tape.hs[:-1]], axis=0) if T else tape.hs
    da2 = da_all.reshape(-1, 4 * H)
    dWx = da2.T @ tape.xs.reshape(-1, Wx.shape[1])
    dWh = da2.T @ h_prevs.reshape(-1, H)
    db = da2.sum(axis=0)
    dxs = da_all @ Wx
    if tape.squeeze:
        dxs = dxs[:, 0]
        dinit = LstmState(dh[0], dc[0])
    else:
        dinit = LstmState(dh, dc)
    return _unstack(dWx, dWh, db), dxs, dinit
