"""Compare the model's analytic gradients with central finite differences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Vocabulary
from .decoder import DecoderConfig, decoder_forward
from .encoder import EncoderConfig, encoder_forward
from .model import CaptionModel
from .numerics import finite_diff_grad, make_rng, max_relative_error

TOLERANCE = 1e-4
FD_EPS = 1e-4
# Central differences straddle a maxout kink when the two pieces are closer
# than the perturbation can move them; such instances are redrawn.
MIN_MAXOUT_MARGIN = 1e-3


@dataclass
class GradcheckReport:
    errors: dict[str, float]
    num_scalars: int
    seed: int
    draws: int
    maxout_margin: float

    @property
    def max_error(self) -> float:
        return max(self.errors.values())

    @property
    def worst(self) -> str:
        return max(self.errors, key=self.errors.get)

    @property
    def passed(self) -> bool:
        return self.max_error <= TOLERANCE


def small_instance(seed: int, *, input_dim=5, embed=4, hidden=6, vocab_size=11, frames=12,
                   chunk_len=4, batch=2, caption_len=5, attention=(True, True, True),
                   variant="hrne", scale=1.0):
    """A small random model, batch of clips and captions.

    Every tensor (biases included) is uniform(-scale, scale). Clips are made
    of chunk-length segments around distinct random means so chunk summaries
    differ; captions are random non-special ids wrapped in BOS/EOS.
    """
    enc = EncoderConfig(input_dim=input_dim, embed_dim=embed, hidden1=hidden, hidden2=hidden,
                        chunk_len=chunk_len, stride=chunk_len, attention=attention, variant=variant)
    dec = DecoderConfig(vocab_size=vocab_size, embed_dim=embed, hidden=hidden, out_dim=hidden)
    vocab = Vocabulary([f"w{i}" for i in range(vocab_size - 4)])
    model = CaptionModel.create(enc, dec, vocab, seed=seed)
    rng = make_rng(seed + 100)
    for name in model.params:
        model.params[name] = rng.uniform(-scale, scale, model.params[name].shape)
    segments = -(-frames // chunk_len)
    means = rng.standard_normal((batch, segments, input_dim))
    xs = np.repeat(means, chunk_len, axis=1)[:, :frames] + 0.3 * rng.standard_normal((batch, frames, input_dim))
    caps = np.array([[1, *rng.integers(4, vocab_size, caption_len), 2] for _ in range(batch)])
    return model, xs, caps


def maxout_margin(model: CaptionModel, xs, caps) -> float:
    v, states, _ = encoder_forward(model.params, model.encoder, xs)
    _, tape = decoder_forward(model.params, v, states, caps, attend=model.attend)
    return float(np.min(np.abs(tape.pieces[0] - tape.pieces[1])))


def run_gradcheck(seed: int = 0, eps: float = FD_EPS, max_draws: int = 20, **instance_kw) -> GradcheckReport:
    """Gradient check of the summed caption NLL with respect to every tensor."""
    for draw in range(max_draws):
        model, xs, caps = small_instance(seed + 1000 * draw, **instance_kw)
        margin = maxout_margin(model, xs, caps)
        if margin >= MIN_MAXOUT_MARGIN:
            break
    _, grads = model.forward_backward(xs, caps)
    numeric = finite_diff_grad(lambda: float(model.loss(xs, caps).sum()), model.params, eps=eps)
    errors = {name: max_relative_error(grads[name], numeric[name]) for name in grads}
    return GradcheckReport(errors, model.params.num_scalars(), seed, draw + 1, margin)
