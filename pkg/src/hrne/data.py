"""Captions, vocabularies, feature files and the synthetic ordering task.

Feature file layout (little-endian)::

    b"HRNF" | u32 version=1 | u32 T | u32 D | T*D float32, row-major

A manifest is UTF-8 text with one ``clip_id<TAB>caption`` record per line;
a clip's features live at ``<dir>/<clip_id>.feat``. Several lines may share
a clip id, one per reference caption.
"""

from __future__ import annotations

import struct
import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, InputError, TruncatedFileError, UnsupportedVersionError
from .numerics import DTYPE

FEATURE_MAGIC = b"HRNF"
FEATURE_VERSION = 1
SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>")
PAD_ID, BOS_ID, EOS_ID, UNK_ID = range(4)
DEFAULT_MAX_FRAMES = 160


def tokenize(text: str) -> list[str]:
    """Lowercase, drop Unicode punctuation, split on whitespace."""
    text = text.lower()
    kept = "".join(ch for ch in text if not unicodedata.category(ch).startswith("P"))
    return kept.split()


class Vocabulary:
    """Token <-> id map with PAD=0, BOS=1, EOS=2, UNK=3 reserved."""

    def __init__(self, tokens=()):
        self.itos: list[str] = list(SPECIALS)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        for tok in tokens:
            if tok in self.stoi:
                raise InputError(f"duplicate vocabulary entry {tok!r}")
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, tok) -> bool:
        return tok in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def encode(self, tokens) -> list[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def decode(self, ids) -> list[str]:
        out = []
        for i in ids:
            if not 0 <= i < len(self.itos):
                raise InputError(f"token id {i} outside vocabulary of size {len(self.itos)}")
            out.append(self.itos[i])
        return out

    @property
    def words(self) -> list[str]:
        return self.itos[len(SPECIALS):]


def build_vocab(corpus, min_count: int = 1) -> Vocabulary:
    """Vocabulary of tokens seen at least ``min_count`` times.

    Entries are ordered by descending count, ties broken lexicographically.
    """
    corpus = list(corpus)
    if not corpus:
        raise InputError("cannot build a vocabulary from an empty corpus")
    counts = Counter(tok for toks in corpus for tok in toks if tok not in SPECIALS)
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary(kept)


# --------------------------------------------------------------------------
# Feature files


def save_features(path, frames) -> None:
    frames = np.asarray(frames, dtype="<f4")
    if frames.ndim != 2:
        raise InputError(f"features must be (T, D), got shape {frames.shape}")
    T, D = frames.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<III", FEATURE_VERSION, T, D))
        fh.write(frames.tobytes(order="C"))


def load_features(path) -> np.ndarray:
    """Read an HRNF file into a float64 ``(T, D)`` array."""
    data = Path(path).read_bytes()
    if data[:4] != FEATURE_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, expected {FEATURE_MAGIC!r}")
    if len(data) < 16:
        raise TruncatedFileError(f"{path}: header truncated ({len(data)} bytes)")
    version, T, D = struct.unpack_from("<III", data, 4)
    if version != FEATURE_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported feature version {version}")
    if T == 0 or D == 0:
        raise InputError(f"{path}: empty feature sequence (T={T}, D={D})")
    need = T * D * 4
    if len(data) - 16 < need:
        raise TruncatedFileError(f"{path}: payload has {len(data) - 16} bytes, expected {need}")
    frames = np.frombuffer(data, dtype="<f4", count=T * D, offset=16).reshape(T, D)
    if not np.all(np.isfinite(frames)):
        raise InputError(f"{path}: non-finite feature values")
    return frames.astype(DTYPE)


def pad_truncate(xs, length: int = DEFAULT_MAX_FRAMES) -> np.ndarray:
    """Keep the first ``length`` frames, or append zero frames up to ``length``."""
    xs = np.asarray(xs, dtype=DTYPE)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise InputError(f"expected a nonempty (T, D) sequence, got shape {xs.shape}")
    if length < 1:
        raise ConfigError(f"target length must be >= 1, got {length}")
    T = xs.shape[0]
    if T >= length:
        return xs[:length].copy()
    return np.concatenate([xs, np.zeros((length - T, xs.shape[1]), dtype=DTYPE)])


@dataclass
class Record:
    clip_id: str
    caption: str


def read_manifest(path) -> list[Record]:
    records = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        clip_id, sep, caption = line.partition("\t")
        if not sep or not clip_id:
            raise InputError(f"{path}:{lineno}: expected 'id<TAB>caption'")
        records.append(Record(clip_id, caption))
    return records


def write_manifest(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(f"{r.clip_id}\t{r.caption}\n")


@dataclass
class Example:
    clip_id: str
    features: np.ndarray
    tokens: list[str]


def load_dataset(data_dir, manifest, max_frames: int | None = DEFAULT_MAX_FRAMES) -> list[Example]:
    """One Example per manifest line; features are loaded once per clip."""
    data_dir = Path(data_dir)
    cache: dict[str, np.ndarray] = {}
    out = []
    for rec in read_manifest(manifest):
        if rec.clip_id not in cache:
            path = data_dir / f"{rec.clip_id}.feat"
            if not path.exists():
                raise InputError(f"no feature file for clip {rec.clip_id!r} at {path}")
            feats = load_features(path)
            cache[rec.clip_id] = feats if max_frames is None else pad_truncate(feats, max_frames)
        out.append(Example(rec.clip_id, cache[rec.clip_id], tokenize(rec.caption)))
    return out


def group_references(examples) -> dict[str, list[list[str]]]:
    refs: dict[str, list[list[str]]] = {}
    for ex in examples:
        refs.setdefault(ex.clip_id, []).append(ex.tokens)
    return refs


# --------------------------------------------------------------------------
# Synthetic ordering task

PROTOTYPE_NAMES = (
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel",
    "india", "juliett", "kilo", "lima", "mike", "november", "oscar", "papa",
)


def prototype_names(P: int) -> list[str]:
    if P <= len(PROTOTYPE_NAMES):
        return list(PROTOTYPE_NAMES[:P])
    return [f"proto{i}" for i in range(P)]


@dataclass
class SynthTask:
    prototypes: np.ndarray  # (P, D)
    names: list[str]
    examples: list[Example]
    segment_ids: list[list[int]]  # prototype index of each segment, per clip


def render_clip(rng, prototypes, segment_ids, segment_len: int, noise: float) -> np.ndarray:
    frames = np.repeat(prototypes[list(segment_ids)], segment_len, axis=0)
    return frames + noise * rng.standard_normal(frames.shape)


def synth_generate(rng, num_clips: int, num_segments: int = 4, segment_len: int = 8, dim: int = 16,
                   num_prototypes: int = 8, noise: float = 0.1) -> SynthTask:
    """Clips made of ``num_segments`` noisy prototype segments; captions name them in order.

    Prototypes are standard-normal vectors drawn first from ``rng``; each
    clip then draws its segment prototypes uniformly (with replacement) and
    per-frame Gaussian noise.
    """
    if num_prototypes < 2:
        raise ConfigError(f"need at least 2 prototypes, got {num_prototypes}")
    if num_segments < 1 or segment_len < 1 or dim < 1 or num_clips < 0:
        raise ConfigError("num_segments, segment_len and dim must be >= 1, num_clips >= 0")
    if noise < 0:
        raise ConfigError(f"noise must be non-negative, got {noise}")
    protos = rng.standard_normal((num_prototypes, dim))
    names = prototype_names(num_prototypes)
    examples, seg_ids = [], []
    for i in range(num_clips):
        ids = rng.integers(0, num_prototypes, size=num_segments).tolist()
        frames = render_clip(rng, protos, ids, segment_len, noise)
        examples.append(Example(f"clip{i:05d}", frames, [names[j] for j in ids]))
        seg_ids.append(ids)
    return SynthTask(protos, names, examples, seg_ids)


def write_dataset(out_dir, examples, manifest_name: str = "manifest.tsv") -> Path:
    """Write ``<id>.feat`` files and a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seen = set()
    for ex in examples:
        if ex.clip_id not in seen:
            save_features(out_dir / f"{ex.clip_id}.feat", ex.features)
            seen.add(ex.clip_id)
    manifest = out_dir / manifest_name
    write_manifest(manifest, [Record(ex.clip_id, " ".join(ex.tokens)) for ex in examples])
    return manifest
