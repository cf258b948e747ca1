"""LSTM caption decoder with a maxout deep-output layer.

At step t the decoder LSTM consumes the embedding of the previous word. The
pre-softmax vector is the elementwise max of two affine pieces of the video
vector z, the decoder hidden state h_t and the previous word,

    s_t = max_k (W_z[k] z + W_h[k] h_t + W_e[k] y_{t-1} + b[k]),

and the next-word distribution is softmax(W_y s_t). When decoder attention
is enabled, z is replaced at each step by an attention context over the
encoder states, queried with the decoder's previous hidden state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import Attender, attention_param_shapes
from .data import BOS_ID as BOS, EOS_ID as EOS, PAD_ID as PAD
from .dropout import apply_mask
from .errors import ConfigError, InputError, ShapeError
from .numerics import DTYPE, log_softmax, softmax
from .recurrent import LstmState, lstm_backward, lstm_forward, lstm_param_shapes, lstm_step

MAXOUT_PIECES = 2
LOG_PROB_FLOOR = np.log(1e-12)


@dataclass
class DecoderConfig:
    vocab_size: int
    embed_dim: int = 512
    hidden: int = 1024
    out_dim: int = 512
    max_len: int = 30

    def __post_init__(self):
        if self.vocab_size < 4:
            raise ConfigError(f"vocab_size must cover the 4 reserved tokens, got {self.vocab_size}")
        for name in ("embed_dim", "hidden", "out_dim", "max_len"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer, got {getattr(self, name)}")


def decoder_param_shapes(cfg: DecoderConfig, z_dim: int, attend: bool = False):
    V, S = cfg.vocab_size, cfg.out_dim
    shapes = {"dec.W_emb": (V, cfg.embed_dim)}
    for k, v in lstm_param_shapes(cfg.embed_dim, cfg.hidden).items():
        shapes[f"dec.lstm.{k}"] = v
    for k in range(MAXOUT_PIECES):
        shapes[f"dec.out{k}.W_z"] = (S, z_dim)
        shapes[f"dec.out{k}.W_h"] = (S, cfg.hidden)
        shapes[f"dec.out{k}.W_e"] = (S, V)
        shapes[f"dec.out{k}.b"] = (S,)
    shapes["dec.W_y"] = (V, S)
    if attend:
        for k, v in attention_param_shapes(z_dim, cfg.hidden).items():
            shapes[f"att3.{k}"] = v
    return shapes


def _group(params, prefix):
    n = len(prefix)
    return {k[n:]: v for k, v in params.items() if k.startswith(prefix)}


def linear_embed(E, x):
    """``E @ x`` for a feature vector, or row ``E[x]`` for an integer token id."""
    E = np.asarray(E, dtype=DTYPE)
    if isinstance(x, (int, np.integer)):
        if not 0 <= x < E.shape[0]:
            raise InputError(f"token id {x} outside vocabulary of size {E.shape[0]}")
        return E[x].copy()
    x = np.asarray(x, dtype=DTYPE)
    if x.shape[-1] != E.shape[1]:
        raise ShapeError(f"linear_embed: E {E.shape}, x {x.shape}")
    return x @ E.T


def maxout(a, b):
    """Elementwise max of two pieces; ties go to the first piece."""
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.shape != b.shape:
        raise ShapeError(f"maxout pieces differ in shape: {a.shape} vs {b.shape}")
    return np.where(a >= b, a, b)


def maxout_backward(ds, a, b):
    first = a >= b
    return ds * first, ds * ~first


def _check_ids(ids, V):
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= V):
        raise InputError(f"token ids must lie in [0, {V}), got range [{ids.min()}, {ids.max()}]")
    return ids


def _pieces(params, z, h, y_prev):
    out = []
    for k in range(MAXOUT_PIECES):
        p = f"dec.out{k}."
        out.append(z @ params[p + "W_z"].T + h @ params[p + "W_h"].T
                   + params[p + "W_e"].T[y_prev]
                   + params[p + "b"])
    return out


def decoder_step(params, z, y_prev, state: LstmState):
    """Advance the decoder one word. Returns ``(dist, new_state)``.

    ``z`` is the conditioning vector for this step (the video vector, or the
    decoder-attention context). Works for a single example or a batch.
    """
    W_emb = params["dec.W_emb"]
    y_prev = _check_ids(y_prev, W_emb.shape[0])
    state, _ = lstm_step(_group(params, "dec.lstm."), W_emb[y_prev], state)
    s = maxout(*_pieces(params, np.asarray(z, dtype=DTYPE), state.h, y_prev))
    return softmax(s @ params["dec.W_y"].T), state


@dataclass
class DecoderTape:
    y_in: np.ndarray
    targets: np.ndarray
    tmask: np.ndarray
    z_all: np.ndarray
    hs_d: np.ndarray
    lstm_tape: object
    pieces: list
    s: np.ndarray
    probs: np.ndarray
    masks: dict
    attender: Attender | None
    att_caches: list
    clamped: int = 0  # scored tokens whose probability fell below 1e-12


def decoder_forward(params, v, states, captions, attend=False, dropout=None):
    """Teacher-forced negative log-likelihood of a batch of captions.

    ``captions`` is ``(B, L+1)`` int ids, each row ``BOS w_1 .. w_k EOS`` then
    PAD. Every non-PAD position after BOS is scored. Returns
    ``(per_example_nll, tape)``.
    """
    captions = _check_ids(captions, params["dec.W_emb"].shape[0])
    if captions.ndim != 2 or captions.shape[1] < 2:
        raise InputError(f"captions need shape (B, L+1) with L >= 1, got {captions.shape}")
    y_in = captions[:, :-1].T  # (L, B)
    targets = captions[:, 1:].T
    tmask = (targets != PAD).astype(DTYPE)
    L, B = y_in.shape
    masks = {}

    x = params["dec.W_emb"][y_in]
    if dropout is not None:
        masks["dec.input"] = dropout.mask("dec.input", x.shape)
    hs, _, lstm_tape = lstm_forward(_group(params, "dec.lstm."), apply_mask(x, masks.get("dec.input")),
                                    tag="decoder")
    if dropout is not None:
        masks["dec.output"] = dropout.mask("dec.output", hs.shape)
    hs_d = apply_mask(hs, masks.get("dec.output"))

    attender, att_caches = None, []
    if attend:
        attender = Attender(_group(params, "att3."), states)
        z_all = np.zeros((L, B, states.shape[-1]), dtype=DTYPE)
        h_prev = np.zeros_like(hs[0])
        for t in range(L):
            z_all[t], cache = attender(h_prev)
            att_caches.append(cache)
            h_prev = hs[t]
    else:
        z_all = np.broadcast_to(v, (L,) + v.shape)

    pieces = _pieces(params, z_all, hs_d, y_in)
    s = maxout(*pieces)
    logp = log_softmax(s @ params["dec.W_y"].T)
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    clamped = picked < LOG_PROB_FLOOR
    picked = np.where(clamped, LOG_PROB_FLOOR, picked)
    nll = -(picked * tmask).sum(axis=0)
    tape = DecoderTape(y_in, targets, tmask * ~clamped, z_all, hs_d, lstm_tape, pieces, s,
                       np.exp(logp), masks, attender, att_caches, int((clamped * tmask).sum()))
    return nll, tape


def decoder_backward(params, tape: DecoderTape, dnll):
    """Backward of ``decoder_forward`` given ``d loss / d nll`` per example.

    Returns ``(grads, dv, dstates)``; exactly one of ``dv``/``dstates`` is
    nonzero depending on whether decoder attention is on.
    """
    L, B = tape.y_in.shape
    V = params["dec.W_emb"].shape[0]
    dnll = np.broadcast_to(np.asarray(dnll, dtype=DTYPE), (B,))
    dlogits = tape.probs.copy()
    np.put_along_axis(dlogits, tape.targets[..., None],
                      np.take_along_axis(dlogits, tape.targets[..., None], axis=-1) - 1.0, axis=-1)
    dlogits *= (tape.tmask * dnll)[..., None]

    grads = {}
    flat = lambda a: a.reshape(-1, a.shape[-1])  # noqa: E731
    grads["dec.W_y"] = flat(dlogits).T @ flat(tape.s)
    ds = dlogits @ params["dec.W_y"]
    dz_all = np.zeros(tape.z_all.shape, dtype=DTYPE)
    dhs_d = np.zeros_like(tape.hs_d)
    y_flat = tape.y_in.reshape(-1)
    for k, dpiece in enumerate(maxout_backward(ds, *tape.pieces)):
        p = f"dec.out{k}."
        d2 = flat(dpiece)
        grads[p + "W_z"] = d2.T @ flat(tape.z_all)
        grads[p + "W_h"] = d2.T @ flat(tape.hs_d)
        dWe_T = np.zeros((V, d2.shape[1]), dtype=DTYPE)
        np.add.at(dWe_T, y_flat, d2)
        grads[p + "W_e"] = dWe_T.T
        grads[p + "b"] = d2.sum(axis=0)
        dz_all += dpiece @ params[p + "W_z"]
        dhs_d += dpiece @ params[p + "W_h"]

    dhs = apply_mask(dhs_d, tape.masks.get("dec.output"))
    dv = dstates = None
    if tape.attender is not None:
        dhs = dhs.copy()
        for t in reversed(range(L)):
            dq = tape.attender.backward(dz_all[t], tape.att_caches[t])
            if t > 0:
                dhs[t - 1] += dq
        ga, dstates = tape.attender.finish()
        grads.update({f"att3.{k}": g for k, g in ga.items()})
    else:
        dv = dz_all.sum(axis=0)

    gl, dx, _ = lstm_backward(_group(params, "dec.lstm."), tape.lstm_tape, dhs)
    grads.update({f"dec.lstm.{k}": g for k, g in gl.items()})
    dx = apply_mask(dx, tape.masks.get("dec.input"))
    dW_emb = np.zeros_like(params["dec.W_emb"])
    np.add.at(dW_emb, y_flat, flat(dx))
    grads["dec.W_emb"] = dW_emb
    return grads, dv, dstates


def greedy_decode(params, v, states=None, max_len: int = 30, attend: bool = False):
    """Argmax decoding from BOS until EOS or ``max_len`` words.

    ``v`` is ``(z_dim,)`` or ``(B, z_dim)``. Returns a list of id lists (or
    one id list for unbatched input), EOS excluded.
    """
    if max_len < 1:
        raise ConfigError(f"max_len must be >= 1, got {max_len}")
    v = np.asarray(v, dtype=DTYPE)
    single = v.ndim == 1
    if single:
        v = v[None]
        states = None if states is None else np.asarray(states)[None]
    B = v.shape[0]
    H = params["dec.lstm.W_ih"].shape[0]
    state = LstmState.zeros(H, B)
    attender = Attender(_group(params, "att3."), states) if attend else None
    y = np.full(B, BOS)
    out = [[] for _ in range(B)]
    done = np.zeros(B, dtype=bool)
    for _ in range(max_len):
        z = attender(state.h)[0] if attend else v
        dist, state = decoder_step(params, z, y, state)
        y = np.argmax(dist, axis=-1)
        for b in np.flatnonzero(~done):
            if y[b] == EOS:
                done[b] = True
            else:
                out[b].append(int(y[b]))
        if done.all():
            break
    return out[0] if single else out


def sequence_nll(params, v, reference, states=None, attend=False) -> float:
    """Sum of -log p over a BOS/EOS-wrapped reference under teacher forcing."""
    ref = np.asarray(reference)
    if ref.ndim != 1 or ref.size < 2 or ref[0] != BOS or ref[-1] != EOS:
        raise InputError("reference must be a 1-D id sequence starting with BOS and ending with EOS")
    v = np.asarray(v, dtype=DTYPE)[None]
    st = None if states is None else np.asarray(states, dtype=DTYPE)[None]
    nll, _ = decoder_forward(params, v, st, ref[None], attend=attend)
    return float(nll[0])
