"""Video encoders: the two-level hierarchical encoder and two baselines.

The hierarchical encoder embeds frames linearly, cuts the embedded sequence
into fixed-length chunks, summarizes each chunk with a short LSTM whose
hidden states are averaged (the "filter"), and runs a second LSTM over the
chunk summaries. Optional attention sits in front of either LSTM.

Batched entry points (``encoder_forward``/``encoder_backward``) take videos
of shape ``(B, T, D)`` and parameter mappings keyed by full names such as
``"enc1.W_ix"``. The per-video functions (``encode_hrne`` and friends) are
thin wrappers over them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .attention import attention_param_shapes, attentive_lstm_backward, attentive_lstm_forward
from .dropout import apply_mask
from .errors import ConfigError, InputError, ShapeError
from .numerics import DTYPE
from .recurrent import lstm_backward, lstm_forward, lstm_param_shapes

VARIANTS = ("hrne", "stacked", "meanpool")


@dataclass
class EncoderConfig:
    input_dim: int
    embed_dim: int = 512
    hidden1: int = 1024
    hidden2: int = 1024
    chunk_len: int = 8
    stride: int = 8
    attention: tuple[bool, bool, bool] = (False, False, False)
    variant: str = "hrne"
    levels: int = 2

    def __post_init__(self):
        self.attention = tuple(bool(a) for a in self.attention)
        self.validate()

    def validate(self):
        for name in ("input_dim", "embed_dim", "hidden1", "hidden2", "chunk_len", "stride"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer, got {getattr(self, name)}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if len(self.attention) != 3:
            raise ConfigError("attention needs exactly three flags")
        if self.levels != 2:
            raise ConfigError(f"only two-level hierarchies are supported, got levels={self.levels}")
        if self.variant != "hrne" and (self.attention[0] or self.attention[1]):
            raise ConfigError(f"attention positions 1 and 2 require variant 'hrne', not {self.variant!r}")

    @property
    def z_dim(self) -> int:
        """Dimension of the video vector and of each attendable encoder state."""
        return self.embed_dim if self.variant == "meanpool" else self.hidden2


def encoder_param_shapes(cfg: EncoderConfig) -> dict[str, tuple[int, ...]]:
    shapes = {"embed.W": (cfg.embed_dim, cfg.input_dim), "embed.b": (cfg.embed_dim,)}
    if cfg.variant == "meanpool":
        return shapes
    for k, v in lstm_param_shapes(cfg.embed_dim, cfg.hidden1).items():
        shapes[f"enc1.{k}"] = v
    for k, v in lstm_param_shapes(cfg.hidden1, cfg.hidden2).items():
        shapes[f"enc2.{k}"] = v
    if cfg.attention[0]:
        for k, v in attention_param_shapes(cfg.embed_dim, cfg.hidden1).items():
            shapes[f"att1.{k}"] = v
    if cfg.attention[1]:
        for k, v in attention_param_shapes(cfg.hidden1, cfg.hidden2).items():
            shapes[f"att2.{k}"] = v
    return shapes


# --------------------------------------------------------------------------
# Chunking and path length


@dataclass
class ChunkSet:
    chunks: np.ndarray  # (count, n, D), zero where padded
    pad_mask: np.ndarray  # (count, n), True at real frames
    starts: list[int] = field(default_factory=list)

    @property
    def count(self) -> int:
        return self.chunks.shape[0]


def chunk_starts(T: int, n: int, s: int) -> list[int]:
    """0-based window starts 0, s, 2s, ... until a window reaches frame T."""
    if T < 1:
        raise InputError("cannot chunk an empty sequence")
    if n < 1 or s < 1:
        raise ConfigError(f"chunk length and stride must be >= 1, got n={n}, s={s}")
    count = 1 + math.ceil(max(T - n, 0) / s)
    return [k * s for k in range(count)]


def chunk_index(T: int, n: int, s: int) -> np.ndarray:
    """Frame index of every chunk slot, -1 for padding. Shape (count, n)."""
    starts = np.array(chunk_starts(T, n, s))
    idx = starts[:, None] + np.arange(n)[None, :]
    return np.where(idx < T, idx, -1)


def chunk_sequence(xs, n: int, s: int) -> ChunkSet:
    xs = np.asarray(xs, dtype=DTYPE)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise InputError(f"expected a nonempty (T, D) sequence, got shape {xs.shape}")
    idx = chunk_index(xs.shape[0], n, s)
    mask = idx >= 0
    chunks = xs[np.where(mask, idx, 0)] * mask[..., None]
    return ChunkSet(chunks, mask, chunk_starts(xs.shape[0], n, s))


def path_length(T: int, n: int) -> tuple[int, int]:
    """Cells traversed from the first frame to the video vector: (hierarchical, stacked)."""
    if not 1 <= n:
        raise ConfigError(f"chunk length must be >= 1, got {n}")
    if n > T:
        raise ConfigError(f"chunk length {n} exceeds sequence length {T}")
    return n + math.ceil(T / n), T + 1


# --------------------------------------------------------------------------
# Batched forward / backward


@dataclass
class VideoVector:
    v: np.ndarray
    layer2_states: np.ndarray


@dataclass
class EncoderTape:
    variant: str
    xs: np.ndarray
    emb: np.ndarray
    masks: dict
    extra: dict


def _embed(params, xs):
    W, b = params["embed.W"], params["embed.b"]
    if xs.ndim != 3 or xs.shape[-1] != W.shape[1]:
        raise ShapeError(f"frames have shape {xs.shape}, embedding expects dim {W.shape[1]}")
    if xs.shape[1] == 0:
        raise InputError("cannot encode an empty sequence")
    return xs @ W.T + b


def _group(params, prefix):
    n = len(prefix)
    return {k[n:]: v for k, v in params.items() if k.startswith(prefix)}


def encoder_forward(params, cfg: EncoderConfig, xs, dropout=None):
    """Encode a batch of videos ``(B, T, D)``.

    Returns ``(v, states, tape)``: ``v`` is ``(B, z_dim)`` and ``states`` the
    ``(B, m, z_dim)`` sequence the decoder may attend over.
    """
    xs = np.asarray(xs, dtype=DTYPE)
    emb = _embed(params, xs)
    B, T, E = emb.shape
    masks = {}
    if cfg.variant == "meanpool":
        return emb.mean(axis=1), emb, EncoderTape("meanpool", xs, emb, masks, {})

    if dropout is not None:
        masks["enc1.input"] = dropout.mask("enc1.input", emb.shape)
    emb_d = apply_mask(emb, masks.get("enc1.input"))
    enc1 = _group(params, "enc1.")
    enc2 = _group(params, "enc2.")
    extra = {}

    if cfg.variant == "stacked":
        hs1, _, tape1 = lstm_forward(enc1, emb_d.transpose(1, 0, 2), tag="layer1")
        if dropout is not None:
            masks["enc1.output"] = dropout.mask("enc1.output", hs1.shape)
        hs1_d = apply_mask(hs1, masks.get("enc1.output"))
        hs2, _, tape2 = lstm_forward(enc2, hs1_d, tag="layer2")
        extra.update(tape1=tape1, tape2=tape2)
    else:
        n = cfg.chunk_len
        idx = chunk_index(T, n, cfg.stride)
        pad = idx >= 0
        C = idx.shape[0]
        seqs = (emb_d[:, np.where(pad, idx, 0)] * pad[..., None]).reshape(B * C, n, E)
        seq_pad = np.tile(pad, (B, 1))
        if cfg.attention[0]:
            hs1, tape1 = attentive_lstm_forward(
                enc1, _group(params, "att1."), seqs, steps=n, mask=seq_pad, tag="layer1")
        else:
            hs1, _, tape1 = lstm_forward(enc1, seqs.transpose(1, 0, 2), tag="layer1")
        if dropout is not None:
            masks["enc1.output"] = dropout.mask("enc1.output", hs1.shape)
        hs1_d = apply_mask(hs1, masks.get("enc1.output"))
        pool = (seq_pad / seq_pad.sum(axis=1, keepdims=True)).T  # (n, B*C)
        chunk_vecs = np.einsum("tk,tkh->kh", pool, hs1_d).reshape(B, C, -1)
        if cfg.attention[1]:
            hs2, tape2 = attentive_lstm_forward(
                enc2, _group(params, "att2."), chunk_vecs, steps=C, tag="layer2")
        else:
            hs2, _, tape2 = lstm_forward(enc2, chunk_vecs.transpose(1, 0, 2), tag="layer2")
        extra.update(tape1=tape1, tape2=tape2, idx=idx, pad=pad, pool=pool)

    if dropout is not None:
        masks["enc2.output"] = dropout.mask("enc2.output", hs2.shape)
    hs2_d = apply_mask(hs2, masks.get("enc2.output"))
    states = hs2_d.transpose(1, 0, 2)
    return states[:, -1], states, EncoderTape(cfg.variant, xs, emb, masks, extra)


def encoder_backward(params, cfg: EncoderConfig, tape: EncoderTape, dv, dstates):
    """Gradients of the encoder outputs back to all encoder parameters."""
    grads = {}
    xs = tape.xs
    B, T, _ = xs.shape

    if tape.variant == "meanpool":
        demb = dstates + dv[:, None, :] / T
    else:
        x = tape.extra
        enc1 = _group(params, "enc1.")
        enc2 = _group(params, "enc2.")
        dhs2 = dstates.transpose(1, 0, 2).copy()
        dhs2[-1] += dv
        dhs2 = apply_mask(dhs2, tape.masks.get("enc2.output"))
        if tape.variant == "stacked":
            g2, dhs1_d, _ = lstm_backward(enc2, x["tape2"], dhs2)
            dhs1 = apply_mask(dhs1_d, tape.masks.get("enc1.output"))
            g1, dxs, _ = lstm_backward(enc1, x["tape1"], dhs1)
            demb = dxs.transpose(1, 0, 2)
        else:
            idx, pad, pool = x["idx"], x["pad"], x["pool"]
            C, n = idx.shape
            if cfg.attention[1]:
                g2, ga2, dchunk = attentive_lstm_backward(enc2, x["tape2"], dhs2)
                grads.update({f"att2.{k}": v for k, v in ga2.items()})
            else:
                g2, dchunk, _ = lstm_backward(enc2, x["tape2"], dhs2)
                dchunk = dchunk.transpose(1, 0, 2)
            dchunk = dchunk.reshape(B * C, -1)
            dhs1 = apply_mask(pool[:, :, None] * dchunk[None], tape.masks.get("enc1.output"))
            if cfg.attention[0]:
                g1, ga1, dseqs = attentive_lstm_backward(enc1, x["tape1"], dhs1)
                grads.update({f"att1.{k}": v for k, v in ga1.items()})
            else:
                g1, dseqs, _ = lstm_backward(enc1, x["tape1"], dhs1)
                dseqs = dseqs.transpose(1, 0, 2)
            dseqs = dseqs.reshape(B, C, n, -1) * pad[..., None]
            demb = np.zeros_like(tape.emb)
            flat_idx = idx[pad]
            np.add.at(demb, (slice(None), flat_idx), dseqs[:, pad])
        grads.update({f"enc1.{k}": v for k, v in g1.items()})
        grads.update({f"enc2.{k}": v for k, v in g2.items()})
        demb = apply_mask(demb, tape.masks.get("enc1.input"))

    d2 = demb.reshape(-1, demb.shape[-1])
    grads["embed.W"] = d2.T @ xs.reshape(-1, xs.shape[-1])
    grads["embed.b"] = d2.sum(axis=0)
    return grads


# --------------------------------------------------------------------------
# Per-video API


def lstm_filter_chunk(params, chunk, pad_mask=None, att_params=None):
    """Mean of the filter LSTM's hidden states over the non-padded steps of one chunk.

    ``params`` are the 12 filter LSTM tensors; with ``att_params`` each step's
    input is an attention context over the chunk's real frames.
    """
    chunk = np.asarray(chunk, dtype=DTYPE)
    n = chunk.shape[0]
    pad_mask = np.ones(n, dtype=bool) if pad_mask is None else np.asarray(pad_mask, dtype=bool)
    if pad_mask.shape != (n,):
        raise ShapeError(f"pad mask {pad_mask.shape} does not match chunk length {n}")
    if not pad_mask.any():
        raise InputError("chunk has no real frames")
    if att_params is None:
        hs, _, _ = lstm_forward(params, chunk, tag="layer1")
    else:
        hs, _ = attentive_lstm_forward(params, att_params, chunk[None], steps=n,
                                       mask=pad_mask[None], tag="layer1")
        hs = hs[:, 0]
    return hs[pad_mask].mean(axis=0)


def _encode_one(params, cfg, xs, variant):
    if cfg.variant != variant:
        raise ConfigError(f"config variant is {cfg.variant!r}, expected {variant!r}")
    xs = np.asarray(xs, dtype=DTYPE)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise InputError(f"expected a nonempty (T, D) sequence, got shape {xs.shape}")
    v, states, _ = encoder_forward(params, cfg, xs[None])
    return VideoVector(v[0], states[0])


def encode_hrne(params, cfg: EncoderConfig, xs) -> VideoVector:
    return _encode_one(params, cfg, xs, "hrne")


def encode_stacked(params, cfg: EncoderConfig, xs) -> VideoVector:
    return _encode_one(params, cfg, xs, "stacked")


def encode_meanpool(params, cfg: EncoderConfig, xs) -> VideoVector:
    return _encode_one(params, cfg, xs, "meanpool")


def encode(params, cfg: EncoderConfig, xs) -> VideoVector:
    return _encode_one(params, cfg, xs, cfg.variant)
