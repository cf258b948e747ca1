"""Encoder + decoder captioning model over a single named parameter bundle."""

from __future__ import annotations

import numpy as np

from .data import Vocabulary
from .decoder import (BOS, EOS, PAD, DecoderConfig, decoder_backward, decoder_forward,
                      decoder_param_shapes, greedy_decode)
from .encoder import EncoderConfig, VideoVector, encoder_backward, encoder_forward, encoder_param_shapes
from .errors import InputError, ShapeError
from .numerics import DEFAULT_INIT_SCALE, DTYPE, ParamSet, make_rng, param_init


def model_param_shapes(enc: EncoderConfig, dec: DecoderConfig) -> dict[str, tuple[int, ...]]:
    shapes = encoder_param_shapes(enc)
    shapes.update(decoder_param_shapes(dec, enc.z_dim, attend=enc.attention[2]))
    return shapes


def init_params(enc: EncoderConfig, dec: DecoderConfig, seed: int = 0,
                scale: float = DEFAULT_INIT_SCALE, forget_bias: float = 1.0) -> ParamSet:
    """Uniform(-scale, scale) weights, zero biases, forget-gate biases at ``forget_bias``."""
    rng = make_rng(seed)
    params = ParamSet()
    for name, shape in model_param_shapes(enc, dec).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf.startswith("b"):
            value = np.full(shape, forget_bias if leaf == "b_f" else 0.0, dtype=DTYPE)
        else:
            value = param_init(rng, shape, scale)
        params.add(name, value)
    return params


def pad_captions(id_lists) -> np.ndarray:
    """Stack BOS/EOS-wrapped id lists into a PAD-filled ``(B, L+1)`` array."""
    width = max(len(ids) for ids in id_lists)
    out = np.full((len(id_lists), width), PAD, dtype=np.int64)
    for b, ids in enumerate(id_lists):
        out[b, :len(ids)] = ids
    return out


def stack_videos(videos) -> np.ndarray:
    lengths = {np.shape(v) for v in videos}
    if len(lengths) != 1:
        raise ShapeError(f"videos in one batch must share (T, D); got {sorted(lengths)}")
    return np.stack([np.asarray(v, dtype=DTYPE) for v in videos])


class CaptionModel:
    """Video encoder and caption decoder sharing one ``ParamSet``."""

    def __init__(self, encoder: EncoderConfig, decoder: DecoderConfig,
                 params: ParamSet, vocab: Vocabulary | None = None):
        self.encoder = encoder
        self.decoder = decoder
        self.params = params
        self.vocab = vocab
        expected = model_param_shapes(encoder, decoder)
        if list(expected) != list(params):
            missing = set(expected) ^ set(params)
            raise ShapeError(f"parameter names do not match the config: {sorted(missing)}")
        for name, shape in expected.items():
            if params[name].shape != tuple(shape):
                raise ShapeError(f"{name}: expected shape {shape}, got {params[name].shape}")
        if vocab is not None and len(vocab) != decoder.vocab_size:
            raise ShapeError(f"vocabulary has {len(vocab)} entries, decoder expects {decoder.vocab_size}")

    @classmethod
    def create(cls, encoder: EncoderConfig, decoder: DecoderConfig, vocab=None, seed: int = 0,
               **init_kw) -> "CaptionModel":
        return cls(encoder, decoder, init_params(encoder, decoder, seed, **init_kw), vocab)

    @property
    def attend(self) -> bool:
        return self.encoder.attention[2]

    def loss(self, videos, captions, dropout=None) -> np.ndarray:
        """Per-example caption NLL for a batch (no gradients)."""
        return self._forward(videos, captions, dropout)[0]

    def _forward(self, videos, captions, dropout):
        xs = videos if isinstance(videos, np.ndarray) and videos.ndim == 3 else stack_videos(videos)
        caps = captions if isinstance(captions, np.ndarray) else pad_captions(captions)
        if caps.shape[0] != xs.shape[0]:
            raise InputError(f"{xs.shape[0]} videos but {caps.shape[0]} captions")
        v, states, etape = encoder_forward(self.params, self.encoder, xs, dropout)
        nll, dtape = decoder_forward(self.params, v, states, caps, self.attend, dropout)
        return nll, etape, dtape, v, states

    def forward_backward(self, videos, captions, dropout=None, weight: float = 1.0):
        """Summed NLL of the batch and its gradient, scaled by ``weight``.

        Returns ``(nll_per_example, grads)``; ``grads`` maps every parameter
        name to ``weight * d(sum nll)/d param``.
        """
        nll, etape, dtape, v, states = self._forward(videos, captions, dropout)
        grads, dv, dstates = decoder_backward(self.params, dtape, weight)
        if dv is None:
            dv = np.zeros_like(v)
        if dstates is None:
            dstates = np.zeros_like(states)
        grads.update(encoder_backward(self.params, self.encoder, etape, dv, dstates))
        return nll, {name: grads[name] for name in self.params}

    def encode(self, video) -> VideoVector:
        v, states, _ = encoder_forward(self.params, self.encoder, np.asarray(video, dtype=DTYPE)[None])
        return VideoVector(v[0], states[0])

    def generate_ids(self, videos, max_len: int | None = None) -> list[list[int]]:
        xs = stack_videos(videos)
        v, states, _ = encoder_forward(self.params, self.encoder, xs)
        max_len = self.decoder.max_len if max_len is None else max_len
        return greedy_decode(self.params, v, states, max_len=max_len, attend=self.attend)

    def generate(self, videos, max_len: int | None = None) -> list[list[str]]:
        """Greedy captions as token lists; needs a vocabulary."""
        if self.vocab is None:
            raise InputError("model has no vocabulary attached")
        return [self.vocab.decode(ids) for ids in self.generate_ids(videos, max_len)]

    def wrap(self, tokens) -> list[int]:
        """BOS + encoded tokens + EOS."""
        return [BOS] + self.vocab.encode(tokens) + [EOS]
