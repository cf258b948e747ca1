"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"HRNE" | u32 version=1
    config block:  u32 byte length, UTF-8 ``key=value`` lines; ``encoder.*``
                   and ``decoder.*`` keys describe the model, ``data.*`` keys
                   carry preprocessing settings (e.g. ``data.max_frames``)
    vocabulary:    u32 count, then per token u32 byte length + UTF-8 bytes
    tensor table:  u32 count, then per tensor
                   u32 name length + UTF-8 name, u32 rank, rank x u64 dims,
                   float32 values, row-major
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .data import SPECIALS, Vocabulary
from .decoder import DecoderConfig
from .encoder import EncoderConfig
from .errors import (CheckpointShapeError, ConfigError, FormatError, TruncatedFileError,
                     UnsupportedVersionError)
from .model import CaptionModel, model_param_shapes
from .numerics import DTYPE, ParamSet

MAGIC = b"HRNE"
VERSION = 1


@dataclass
class Checkpoint:
    config: dict[str, str]
    vocab: list[str]
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    version: int = VERSION

    @classmethod
    def from_model(cls, model: CaptionModel) -> "Checkpoint":
        if model.vocab is None:
            raise ConfigError("cannot checkpoint a model without a vocabulary")
        return cls(
            config=config_to_dict(model.encoder, model.decoder),
            vocab=list(model.vocab.itos),
            tensors={k: np.asarray(model.params[k], dtype="<f4").copy() for k in model.params},
        )

    def to_model(self) -> CaptionModel:
        enc, dec = config_from_dict(self.config)
        vocab = Vocabulary(self.vocab[len(SPECIALS):])
        params = ParamSet({k: v.astype(DTYPE) for k, v in self.tensors.items()})
        return CaptionModel(enc, dec, params, vocab)

    def to_bytes(self) -> bytes:
        return encode_checkpoint(self)


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(int(v)) for v in value)
    return str(value)


def config_to_dict(enc: EncoderConfig, dec: DecoderConfig) -> dict[str, str]:
    out = {}
    for prefix, obj in (("encoder", enc), ("decoder", dec)):
        for f in fields(obj):
            out[f"{prefix}.{f.name}"] = _fmt(getattr(obj, f.name))
    return out


def config_from_dict(cfg: dict[str, str]):
    kw = {"encoder": {}, "decoder": {}}
    types = {"encoder": {f.name: f for f in fields(EncoderConfig)},
             "decoder": {f.name: f for f in fields(DecoderConfig)}}
    for key, raw in cfg.items():
        prefix, _, name = key.partition(".")
        if prefix == "data":
            continue
        if prefix not in kw or name not in types[prefix]:
            raise FormatError(f"unknown config key in checkpoint: {key!r}")
        if name == "attention":
            kw[prefix][name] = tuple(bool(int(x)) for x in raw.split(","))
        elif name == "variant":
            kw[prefix][name] = raw
        else:
            kw[prefix][name] = int(raw)
    return EncoderConfig(**kw["encoder"]), DecoderConfig(**kw["decoder"])


def _u32(n):
    return struct.pack("<I", n)


def _blob(b: bytes) -> bytes:
    return _u32(len(b)) + b


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    parts = [MAGIC, _u32(ckpt.version)]
    parts.append(_blob("".join(f"{k}={v}\n" for k, v in ckpt.config.items()).encode("utf-8")))
    parts.append(_u32(len(ckpt.vocab)))
    parts += [_blob(tok.encode("utf-8")) for tok in ckpt.vocab]
    parts.append(_u32(len(ckpt.tensors)))
    for name, value in ckpt.tensors.items():
        value = np.ascontiguousarray(value, dtype="<f4")
        parts.append(_blob(name.encode("utf-8")))
        parts.append(_u32(value.ndim))
        parts.append(struct.pack(f"<{value.ndim}Q", *value.shape))
        parts.append(value.tobytes(order="C"))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes, source):
        self.data = data
        self.pos = 0
        self.source = source

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(
                f"{self.source}: truncated at byte {self.pos} (needed {n} more, file has {len(self.data)})"
            )
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def text(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def decode_checkpoint(data: bytes, source="<bytes>") -> Checkpoint:
    if data[:4] != MAGIC:
        raise FormatError(f"{source}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    r = _Reader(data, source)
    r.take(4)
    version = r.u32()
    if version != VERSION:
        raise UnsupportedVersionError(f"{source}: unsupported checkpoint version {version}")
    config = {}
    for line in r.text().splitlines():
        if line:
            key, sep, value = line.partition("=")
            if not sep:
                raise FormatError(f"{source}: malformed config line {line!r}")
            config[key] = value
    vocab = [r.text() for _ in range(r.u32())]
    tensors = {}
    for _ in range(r.u32()):
        name = r.text()
        rank = r.u32()
        dims = struct.unpack(f"<{rank}Q", r.take(8 * rank))
        count = int(np.prod(dims, dtype=np.int64))
        tensors[name] = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(dims).copy()
    if r.pos != len(data):
        raise FormatError(f"{source}: {len(data) - r.pos} trailing bytes")
    ckpt = Checkpoint(config, vocab, tensors, version)
    _validate(ckpt, source)
    return ckpt


def _validate(ckpt: Checkpoint, source):
    try:
        enc, dec = config_from_dict(ckpt.config)
    except (ConfigError, ValueError, TypeError) as exc:
        raise FormatError(f"{source}: invalid embedded config: {exc}") from None
    if len(ckpt.vocab) != dec.vocab_size or tuple(ckpt.vocab[:len(SPECIALS)]) != SPECIALS:
        raise FormatError(f"{source}: vocabulary does not match decoder.vocab_size={dec.vocab_size}")
    expected = model_param_shapes(enc, dec)
    if list(expected) != list(ckpt.tensors):
        diff = sorted(set(expected) ^ set(ckpt.tensors))
        raise CheckpointShapeError(f"{source}: tensor names differ from the config: {diff}")
    for name, shape in expected.items():
        if ckpt.tensors[name].shape != tuple(shape):
            raise CheckpointShapeError(
                f"{source}: tensor {name} has shape {ckpt.tensors[name].shape}, config implies {tuple(shape)}"
            )


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(encode_checkpoint(ckpt))


def load_checkpoint(path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes(), source=path)
