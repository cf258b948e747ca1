"""Hierarchical recurrent video encoder with attention and an LSTM caption decoder.

Pure numpy, float64, hand-written backward passes checked against central
finite differences.
"""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import Vocabulary, build_vocab, load_features, pad_truncate, save_features, synth_generate, tokenize
from .decoder import DecoderConfig, greedy_decode, sequence_nll
from .encoder import EncoderConfig, chunk_sequence, encode_hrne, encode_meanpool, encode_stacked, path_length
from .metrics import bleu_n, corpus_bleu, token_accuracy
from .model import CaptionModel
from .training import Adam, TrainConfig, train

__all__ = [
    "Adam", "CaptionModel", "Checkpoint", "DecoderConfig", "EncoderConfig", "TrainConfig", "Vocabulary",
    "bleu_n", "build_vocab", "chunk_sequence", "corpus_bleu", "encode_hrne", "encode_meanpool",
    "encode_stacked", "greedy_decode", "load_checkpoint", "load_features", "pad_truncate", "path_length",
    "save_checkpoint", "save_features", "sequence_nll", "synth_generate", "token_accuracy", "tokenize",
    "train",
]
