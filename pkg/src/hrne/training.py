"""Adam, the mini-batch training loop and early stopping."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint  # noqa: F401
from .data import Example, group_references
from .dropout import Dropout, dropout_apply  # noqa: F401
from .errors import ConfigError, InputError, NumericError, TrainingError
from .metrics import corpus_bleu, mean_token_accuracy
from .model import CaptionModel, pad_captions, stack_videos
from .numerics import make_rng

log = logging.getLogger(__name__)


class Adam:
    """Bias-corrected Adam over a name -> array mapping."""

    def __init__(self, lr: float = 2e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0 or not 0 <= beta1 < 1 or not 0 <= beta2 < 1 or eps < 0:
            raise ConfigError(f"invalid Adam hyperparameters lr={lr} b1={beta1} b2={beta2} eps={eps}")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params, grads) -> None:
        """Update ``params`` (a ParamSet or dict of arrays) in place."""
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for {name}")
            if g.shape != params[name].shape:
                raise ConfigError(f"{name}: gradient shape {g.shape} != {params[name].shape}")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[name] -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def adam_step(state: Adam, params, grads) -> Adam:
    state.step(params, grads)
    return state


def clip_global_norm(grads, max_norm: float) -> float:
    """Scale ``grads`` in place so their joint L2 norm is at most ``max_norm``."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


@dataclass
class TrainConfig:
    batch_size: int = 128
    max_epochs: int = 200
    dropout: float = 0.5
    patience: int | None = 10
    seed: int = 0
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = 5.0
    metric: str = "bleu4"  # or "token_accuracy"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.metric not in ("bleu4", "token_accuracy"):
            raise ConfigError(f"unknown validation metric {self.metric!r}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    updates: int
    val_metric: float | None = None


@dataclass
class TrainResult:
    history: list[EpochRecord]
    batch_losses: list[float]
    best_checkpoint: Checkpoint | None
    best_epoch: int
    stopped_early: bool = False
    updates: int = 0
    extra: dict = field(default_factory=dict)


def evaluate(model: CaptionModel, examples, metric: str = "bleu4", batch_size: int = 128) -> float:
    """Corpus BLEU@4 or mean token accuracy of greedy captions, one per clip."""
    refs = group_references(examples)
    first = {}
    for ex in examples:
        first.setdefault(ex.clip_id, ex)
    clips = list(first.values())
    hyps = []
    for i in range(0, len(clips), batch_size):
        hyps += model.generate([ex.features for ex in clips[i:i + batch_size]])
    if metric == "bleu4":
        return corpus_bleu([(h, refs[ex.clip_id]) for h, ex in zip(hyps, clips)], 4).bleu4
    return mean_token_accuracy(hyps, [refs[ex.clip_id][0] for ex in clips])


def num_batches(n_examples: int, batch_size: int) -> int:
    return math.ceil(n_examples / batch_size)


def train(model: CaptionModel, dataset: list[Example], config: TrainConfig,
          val_set: list[Example] | None = None, max_updates: int | None = None,
          callback=None) -> TrainResult:
    """Mini-batch Adam on the mean per-example caption NLL.

    Each epoch shuffles with the seeded generator, then one update per batch.
    With ``val_set`` the configured metric is computed after every epoch and
    the best-scoring checkpoint is kept; early stopping counts epochs without
    improvement. Without it, the lowest epoch training loss plays that role.
    """
    if not dataset:
        raise InputError("training set is empty")
    if model.vocab is None:
        raise InputError("model needs a vocabulary before training")
    rng = make_rng(config.seed)
    opt = Adam(config.lr, config.beta1, config.beta2, config.eps)
    captions = [model.wrap(ex.tokens) for ex in dataset]
    history: list[EpochRecord] = []
    batch_losses: list[float] = []
    best_score, best_epoch, best_ckpt = -math.inf, -1, None
    since_best = 0
    stopped_early = False

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(dataset))
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            xs = stack_videos([dataset[i].features for i in idx])
            caps = pad_captions([captions[i] for i in idx])
            drop = Dropout(config.dropout, rng) if config.dropout > 0 else None
            nll, grads = model.forward_backward(xs, caps, dropout=drop, weight=1.0 / len(idx))
            loss = float(nll.mean())
            if not math.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss {loss} at epoch {epoch}, update {opt.t + 1} "
                    f"(batch of {len(idx)}, lr={config.lr})"
                )
            if config.clip_norm:
                clip_global_norm(grads, config.clip_norm)
            opt.step(model.params, grads)
            batch_losses.append(loss)
            epoch_losses.append(loss)
            if callback is not None:
                callback(opt.t, loss)
            if max_updates is not None and opt.t >= max_updates:
                break
        rec = EpochRecord(epoch, float(np.mean(epoch_losses)), opt.t)
        if val_set:
            rec.val_metric = evaluate(model, val_set, config.metric)
            score = rec.val_metric
        else:
            score = -rec.train_loss
        history.append(rec)
        log.info("epoch %d loss %.5f val %s", epoch, rec.train_loss, rec.val_metric)
        if score > best_score:
            best_score, best_epoch = score, epoch
            best_ckpt = Checkpoint.from_model(model)
            since_best = 0
        else:
            since_best += 1
        if max_updates is not None and opt.t >= max_updates:
            break
        if config.patience is not None and since_best >= config.patience:
            stopped_early = True
            break

    return TrainResult(history, batch_losses, best_ckpt, best_epoch, stopped_early, opt.t)
