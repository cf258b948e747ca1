import math

import numpy as np
import pytest
from conftest import assert_grads_match

from hrne.encoder import (EncoderConfig, chunk_sequence, chunk_starts, encode_hrne, encode_meanpool,
                          encode_stacked, encoder_backward, encoder_forward, encoder_param_shapes,
                          lstm_filter_chunk, path_length)
from hrne.errors import ConfigError, InputError
from hrne.numerics import finite_diff_grad, make_rng
from hrne.recurrent import LstmState, counting_cells, lstm_step


def make_params(cfg, seed=0, scale=0.5):
    rng = make_rng(seed)
    return {k: rng.uniform(-scale, scale, s) for k, s in encoder_param_shapes(cfg).items()}


def zero_params(cfg):
    return {k: np.zeros(s) for k, s in encoder_param_shapes(cfg).items()}


# ---------------------------------------------------------------- chunking

def test_chunk_count_default_160_frames():
    cs = chunk_sequence(np.ones((160, 3)), 8, 8)
    assert cs.count == 20 and cs.pad_mask.all()


def test_chunk_count_long_video():
    assert chunk_sequence(np.ones((1000, 2)), 30, 30).count == 34


def test_chunk_padding():
    xs = np.arange(1, 31, dtype=float).reshape(10, 3)
    cs = chunk_sequence(xs, 8, 8)
    assert cs.count == 2
    assert cs.pad_mask[1].sum() == 2
    assert not cs.chunks[1, 2:].any()
    assert np.array_equal(cs.chunks[1, :2], xs[8:])
    assert np.array_equal(cs.chunks[0], xs[:8])


def test_chunk_count_exhaustive():
    for T in range(1, 501):
        for n in range(1, T + 1):
            assert len(chunk_starts(T, n, n)) == math.ceil(T / n)


def test_overlapping_stride():
    cs = chunk_sequence(np.arange(10.0)[:, None], 4, 2)
    assert cs.starts == [0, 2, 4, 6]
    assert np.array_equal(cs.chunks[-1, :, 0], [6, 7, 8, 9])
    assert cs.pad_mask.all()


def test_chunk_errors():
    with pytest.raises(InputError):
        chunk_sequence(np.zeros((0, 3)), 4, 4)
    with pytest.raises(ConfigError):
        chunk_sequence(np.zeros((5, 3)), 0, 4)


# ---------------------------------------------------------------- filter

def test_filter_single_step(rng):
    cfg = EncoderConfig(input_dim=3, embed_dim=3, hidden1=4, hidden2=4)
    p = {k[5:]: v for k, v in make_params(cfg).items() if k.startswith("enc1.")}
    x = rng.standard_normal((1, 3))
    state, _ = lstm_step(p, x[0], LstmState.zeros(4))
    assert np.allclose(lstm_filter_chunk(p, x), state.h, atol=1e-15)


def test_filter_zero_weights(rng):
    cfg = EncoderConfig(input_dim=3, embed_dim=3, hidden1=4, hidden2=4)
    p = {k[5:]: v for k, v in zero_params(cfg).items() if k.startswith("enc1.")}
    assert not lstm_filter_chunk(p, rng.standard_normal((8, 3))).any()


def test_filter_is_mean_of_hidden_states(rng):
    cfg = EncoderConfig(input_dim=3, embed_dim=3, hidden1=5, hidden2=4)
    p = {k[5:]: v for k, v in make_params(cfg, scale=1.0).items() if k.startswith("enc1.")}
    chunk = np.tile(rng.standard_normal(3), (6, 1))
    state, hs = LstmState.zeros(5), []
    for x in chunk:
        state, _ = lstm_step(p, x, state)
        hs.append(state.h)
    assert np.allclose(lstm_filter_chunk(p, chunk), np.mean(hs, axis=0), atol=1e-14)
    # padded steps are left out of the mean
    mask = np.array([1, 1, 1, 1, 0, 0], dtype=bool)
    assert np.allclose(lstm_filter_chunk(p, chunk, mask), np.mean(hs[:4], axis=0), atol=1e-14)
    with pytest.raises(InputError):
        lstm_filter_chunk(p, chunk, np.zeros(6, dtype=bool))


# ---------------------------------------------------------------- encoders

def test_hrne_output_shape_and_determinism(rng):
    cfg = EncoderConfig(input_dim=5, embed_dim=4, hidden1=6, hidden2=7, chunk_len=4, stride=4)
    xs = rng.standard_normal((13, 5))
    a = encode_hrne(make_params(cfg), cfg, xs)
    b = encode_hrne(make_params(cfg), cfg, xs)
    assert a.v.shape == (7,) and a.layer2_states.shape == (4, 7)
    assert np.array_equal(a.v, b.v)
    assert np.array_equal(a.v, a.layer2_states[-1])


def test_hrne_single_chunk_is_one_layer2_step(rng):
    cfg = EncoderConfig(input_dim=5, embed_dim=4, hidden1=6, hidden2=7, chunk_len=9, stride=9)
    p = make_params(cfg, scale=1.0)
    xs = rng.standard_normal((9, 5))
    emb = xs @ p["embed.W"].T + p["embed.b"]
    f = lstm_filter_chunk({k[5:]: v for k, v in p.items() if k.startswith("enc1.")}, emb)
    state, _ = lstm_step({k[5:]: v for k, v in p.items() if k.startswith("enc2.")}, f, LstmState.zeros(7))
    assert np.allclose(encode_hrne(p, cfg, xs).v, state.h, atol=1e-14)


@pytest.mark.parametrize("T,n", [(16, 4), (13, 4), (9, 3), (7, 8)])
def test_hrne_cell_counts(rng, T, n):
    cfg = EncoderConfig(input_dim=3, embed_dim=3, hidden1=4, hidden2=4, chunk_len=n, stride=n)
    with counting_cells() as counter:
        encode_hrne(make_params(cfg), cfg, rng.standard_normal((T, 3)))
    assert counter.counts["layer1"] == n * math.ceil(T / n)
    assert counter.counts["layer2"] == math.ceil(T / n)


def test_hrne_cell_counts_with_attention(rng):
    cfg = EncoderConfig(input_dim=3, embed_dim=3, hidden1=4, hidden2=4, chunk_len=4, stride=4,
                        attention=(True, True, False))
    with counting_cells() as counter:
        encode_hrne(make_params(cfg), cfg, rng.standard_normal((10, 3)))
    assert counter.counts["layer1"] == 12 and counter.counts["layer2"] == 3


def test_stacked_cell_count_and_zero(rng):
    cfg = EncoderConfig(input_dim=3, embed_dim=3, hidden1=4, hidden2=4, variant="stacked")
    with counting_cells() as counter:
        encode_stacked(make_params(cfg), cfg, rng.standard_normal((11, 3)))
    assert counter.total == 22
    assert not encode_stacked(zero_params(cfg), cfg, rng.standard_normal((11, 3))).v.any()


def test_path_lengths():
    assert path_length(1000, 30) == (64, 1001)
    assert path_length(9, 3) == (6, 10)
    for T in (1, 5, 40):
        assert path_length(T, T) == (T + 1, T + 1)
    with pytest.raises(ConfigError):
        path_length(5, 6)


def test_meanpool_properties(rng):
    cfg = EncoderConfig(input_dim=4, embed_dim=3, variant="meanpool")
    p = make_params(cfg)
    x = rng.standard_normal(4)
    emb = p["embed.W"] @ x + p["embed.b"]
    assert np.allclose(encode_meanpool(p, cfg, x[None]).v, emb)
    assert np.allclose(encode_meanpool(p, cfg, np.tile(x, (6, 1))).v, emb)
    xs = rng.standard_normal((10, 4))
    out = encode_meanpool(p, cfg, xs)
    assert out.layer2_states.shape == (10, 3)
    for _ in range(5):
        perm = rng.permutation(10)
        assert np.max(np.abs(encode_meanpool(p, cfg, xs[perm]).v - out.v)) <= 1e-12


def test_hrne_is_order_sensitive():
    rng = make_rng(2024)
    cfg = EncoderConfig(input_dim=5, embed_dim=4, hidden1=6, hidden2=6, chunk_len=4, stride=4)
    p = make_params(cfg, seed=3)
    xs = rng.standard_normal((16, 5))
    v = encode_hrne(p, cfg, xs).v
    assert np.max(np.abs(encode_hrne(p, cfg, xs[rng.permutation(16)]).v - v)) > 1e-6


def test_config_validation():
    with pytest.raises(ConfigError):
        EncoderConfig(input_dim=3, levels=3)
    with pytest.raises(ConfigError):
        EncoderConfig(input_dim=3, variant="pyramid")
    with pytest.raises(ConfigError):
        EncoderConfig(input_dim=3, variant="meanpool", attention=(True, False, False))
    with pytest.raises(ConfigError):
        EncoderConfig(input_dim=3, stride=0)
    with pytest.raises(ConfigError):
        encode_stacked({}, EncoderConfig(input_dim=3), np.zeros((4, 3)))


# ---------------------------------------------------------------- gradients

@pytest.mark.parametrize("variant,att,T,n,s", [
    ("hrne", (True, True, False), 12, 4, 4),
    ("hrne", (False, False, False), 12, 4, 4),
    ("hrne", (True, True, False), 10, 4, 4),
    ("hrne", (False, True, False), 10, 4, 2),
    ("stacked", (False, False, False), 7, 4, 4),
    ("meanpool", (False, False, False), 7, 4, 4),
])
def test_encoder_gradients(variant, att, T, n, s):
    rng = make_rng(T * 31 + n + s)
    cfg = EncoderConfig(input_dim=5, embed_dim=4, hidden1=6, hidden2=6, chunk_len=n, stride=s,
                        attention=att, variant=variant)
    p = make_params(cfg, seed=T + n, scale=1.0)
    means = 1.5 * rng.standard_normal((2, T, 5))
    xs = means + 0.3 * rng.standard_normal((2, T, 5))
    v, states, _ = encoder_forward(p, cfg, xs)
    rv, rs = rng.standard_normal(v.shape), rng.standard_normal(states.shape)

    def loss():
        v, states, _ = encoder_forward(p, cfg, xs)
        return float(np.sum(rv * v) + np.sum(rs * states))

    _, _, tape = encoder_forward(p, cfg, xs)
    grads = encoder_backward(p, cfg, tape, rv, rs)
    assert_grads_match(grads, finite_diff_grad(loss, p))
