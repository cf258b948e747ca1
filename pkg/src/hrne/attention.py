"""Soft attention over a set of vectors, queried by a recurrent hidden state.

Scores are ``e_i = w . tanh(W_a x_i + U_a h + b_a)``, weights are their
softmax and the context is the weighted sum of the items. The same block is
used in three places in the captioning model (frames -> filter LSTM,
chunk vectors -> layer-2 LSTM, encoder states -> decoder), each with its own
parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .numerics import DTYPE, param_init, softmax
from .recurrent import LstmState, _stack, _unstack, cell_counter, lstm_step, lstm_step_backward

ATTENTION_NAMES = ("w", "W_a", "U_a", "b_a")


def attention_param_shapes(item_dim: int, query_dim: int, score_dim: int | None = None):
    S = item_dim if score_dim is None else score_dim
    return {"w": (S,), "W_a": (S, item_dim), "U_a": (S, query_dim), "b_a": (S,)}


def init_attention_params(rng, item_dim, query_dim, score_dim=None, scale=0.08):
    shapes = attention_param_shapes(item_dim, query_dim, score_dim)
    params = {k: param_init(rng, s, scale) for k, s in shapes.items()}
    params["b_a"] = np.zeros(shapes["b_a"], dtype=DTYPE)
    return params


def _as_batch(items, h_prev):
    items = np.asarray(items, dtype=DTYPE)
    h_prev = np.asarray(h_prev, dtype=DTYPE)
    single = items.ndim == 2
    if single:
        items = items[None]
        h_prev = h_prev[None]
    return items, h_prev, single


def _check(params, items, h_prev):
    S = params["w"].shape[0]
    if items.ndim != 3 or items.shape[1] == 0:
        raise ShapeError(f"attention needs a nonempty item set, got shape {items.shape}")
    if params["W_a"].shape != (S, items.shape[-1]) or params["b_a"].shape != (S,):
        raise ShapeError(
            f"attention: W_a {params['W_a'].shape}, b_a {params['b_a'].shape}, "
            f"w {params['w'].shape}, items {items.shape}"
        )
    if params["U_a"].shape != (S, h_prev.shape[-1]):
        raise ShapeError(f"attention: U_a {params['U_a'].shape} vs query {h_prev.shape}")


def attention_scores(params, items, h_prev, mask=None):
    """Relevance score of each item for the query ``h_prev``.

    ``items`` is ``(n, Dx)`` or batched ``(B, n, Dx)``. Masked-out items
    (``mask`` False) get a score of ``-inf``.
    """
    items, h_prev, single = _as_batch(items, h_prev)
    _check(params, items, h_prev)
    pre = items @ params["W_a"].T + (h_prev @ params["U_a"].T)[:, None, :] + params["b_a"]
    e = np.tanh(pre) @ params["w"]
    if mask is not None:
        e = np.where(np.broadcast_to(mask, e.shape), e, -np.inf)
    return e[0] if single else e


def attention_weights(scores):
    return softmax(scores, axis=-1)


def attention_context(weights, items):
    weights = np.asarray(weights, dtype=DTYPE)
    items = np.asarray(items, dtype=DTYPE)
    if weights.shape != items.shape[:-1]:
        raise ShapeError(f"attention_context: weights {weights.shape} vs items {items.shape}")
    return np.einsum("...n,...nd->...d", weights, items)


@dataclass
class AttendCache:
    items: np.ndarray
    h_prev: np.ndarray
    t: np.ndarray  # tanh of score pre-activations, (B, n, S)
    alpha: np.ndarray


class Attender:
    """Attention over a fixed item set, evaluated for a sequence of queries.

    The item projection ``W_a x_i + b_a`` does not depend on the query and is
    computed once per item set.
    """

    def __init__(self, params, items, mask=None):
        items = np.asarray(items, dtype=DTYPE)
        if items.ndim == 2:
            items = items[None]
        self.params = params
        self.items = items
        self.mask = None if mask is None else np.broadcast_to(mask, items.shape[:2])
        if items.ndim != 3 or items.shape[1] == 0:
            raise ShapeError(f"attention needs a nonempty item set, got shape {items.shape}")
        S = params["w"].shape[0]
        if params["W_a"].shape != (S, items.shape[-1]) or params["b_a"].shape != (S,):
            raise ShapeError(f"attention: W_a {params['W_a'].shape} vs items {items.shape}")
        self.item_pre = items @ params["W_a"].T + params["b_a"]
        self.grads = {k: np.zeros_like(params[k]) for k in ATTENTION_NAMES}
        self.ditems = np.zeros_like(items)
        self._dpre_sum = np.zeros_like(self.item_pre)

    def __call__(self, h_prev):
        U_a = self.params["U_a"]
        if U_a.shape[1] != h_prev.shape[-1]:
            raise ShapeError(f"attention: U_a {U_a.shape} vs query {h_prev.shape}")
        t = np.tanh(self.item_pre + (h_prev @ U_a.T)[:, None, :])
        e = t @ self.params["w"]
        if self.mask is not None:
            e = np.where(self.mask, e, -np.inf)
        alpha = softmax(e, axis=-1)
        ctx = np.einsum("bn,bnd->bd", alpha, self.items)
        return ctx, AttendCache(self.items, h_prev, t, alpha)

    def backward(self, dctx, cache: AttendCache):
        """Accumulate parameter/item gradients; return the query gradient."""
        alpha, t = cache.alpha, cache.t
        dalpha = np.einsum("bnd,bd->bn", self.items, dctx)
        self.ditems += alpha[:, :, None] * dctx[:, None, :]
        de = alpha * (dalpha - np.sum(alpha * dalpha, axis=-1, keepdims=True))
        self.grads["w"] += np.einsum("bn,bns->s", de, t)
        dpre = de[:, :, None] * self.params["w"] * (1.0 - t * t)
        self._dpre_sum += dpre
        dq = dpre.sum(axis=1)
        self.grads["U_a"] += dq.T @ cache.h_prev
        return dq @ self.params["U_a"]

    def finish(self):
        """Fold the per-item projection gradients in; return ``(grads, ditems)``."""
        d = self._dpre_sum.reshape(-1, self._dpre_sum.shape[-1])
        self.grads["W_a"] += d.T @ self.items.reshape(-1, self.items.shape[-1])
        self.grads["b_a"] += d.sum(axis=0)
        self.ditems += self._dpre_sum @ self.params["W_a"]
        self._dpre_sum[:] = 0.0
        return self.grads, self.ditems


def attend(params, items, h_prev, mask=None):
    """scores -> weights -> context for one query. Returns ``(context, weights)``."""
    items, h_prev, single = _as_batch(items, h_prev)
    _check(params, items, h_prev)
    ctx, cache = Attender(params, items, mask)(h_prev)
    if single:
        return ctx[0], cache.alpha[0]
    return ctx, cache.alpha


def attend_backward(params, items, h_prev, dctx, mask=None):
    """Gradients of ``<dctx, attend(...)[0]>``: returns ``(grads, ditems, dh_prev)``."""
    items, h_prev, single = _as_batch(items, h_prev)
    dctx = np.asarray(dctx, dtype=DTYPE)
    if single:
        dctx = dctx[None]
    att = Attender(params, items, mask)
    _, cache = att(h_prev)
    dh = att.backward(dctx, cache)
    grads, ditems = att.finish()
    if single:
        return grads, ditems[0], dh[0]
    return grads, ditems, dh


@dataclass
class AttentiveTape:
    attender: Attender
    att_caches: list
    lstm_caches: list
    in_masks: np.ndarray | None
    hs: np.ndarray


def attentive_lstm_forward(lstm_params, att_params, items, steps, mask=None,
                           in_masks=None, tag="attentive"):
    """LSTM whose input at step t is an attention context over ``items``.

    The query for step t is the LSTM's own previous hidden state (zeros at
    t=0). ``items`` is ``(B, n, Dx)``; ``in_masks`` optionally scales each
    step's input (dropout), shape ``(steps, B, Dx)``. Returns ``(hs, tape)``
    with ``hs`` of shape ``(steps, B, H)``.
    """
    stacked = _stack(lstm_params)
    H = stacked[1].shape[1]
    att = Attender(att_params, items, mask)
    B = att.items.shape[0]
    state = LstmState.zeros(H, B)
    hs = np.zeros((steps, B, H), dtype=DTYPE)
    att_caches, lstm_caches = [], []
    for t in range(steps):
        ctx, ac = att(state.h)
        if in_masks is not None:
            ctx = ctx * in_masks[t]
        state, lc = lstm_step(lstm_params, ctx, state, stacked=stacked)
        hs[t] = state.h
        att_caches.append(ac)
        lstm_caches.append(lc)
    cell_counter.add(tag, steps * B)
    return hs, AttentiveTape(att, att_caches, lstm_caches, in_masks, hs)


def attentive_lstm_backward(lstm_params, tape: AttentiveTape, dhs):
    """Returns ``(lstm_grads, att_grads, ditems)``."""
    stacked = _stack(lstm_params)
    acc = [np.zeros_like(a) for a in stacked]
    steps = len(tape.lstm_caches)
    B, H = tape.hs.shape[1:]
    dh = np.zeros((B, H), dtype=DTYPE)
    dc = np.zeros((B, H), dtype=DTYPE)
    for t in reversed(range(steps)):
        dh = dh + dhs[t]
        _, dx, dh_prev, dc = lstm_step_backward(
            lstm_params, tape.lstm_caches[t], dh, dc, stacked=stacked, grads=acc
        )
        if tape.in_masks is not None:
            dx = dx * tape.in_masks[t]
        dh = dh_prev + tape.attender.backward(dx, tape.att_caches[t])
    att_grads, ditems = tape.attender.finish()
    return _unstack(*acc), att_grads, ditems
