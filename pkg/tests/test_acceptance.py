"""The ten acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL criterion N: ...`` line (also
repeated in the terminal summary) and then asserts the same condition.
"""

import time

import numpy as np
from conftest import ACCEPTANCE_LINES, rand_attention
from test_metrics import oracle_corpus_bleu, toy_pairs

from hrne.attention import attend, attention_context, attention_scores, attention_weights
from hrne.checkpoint import Checkpoint, decode_checkpoint, load_checkpoint, save_checkpoint
from hrne.cli import main
from hrne.data import Vocabulary, synth_generate
from hrne.decoder import DecoderConfig
from hrne.dropout import SITES, Dropout, dropout_apply
from hrne.encoder import EncoderConfig, encode_hrne, encode_meanpool, encoder_param_shapes, path_length
from hrne.errors import FormatError, TruncatedFileError, UnsupportedVersionError
from hrne.gradcheck import run_gradcheck
from hrne.metrics import bleu_n, corpus_bleu
from hrne.model import CaptionModel
from hrne.numerics import make_rng
from hrne.training import TrainConfig, evaluate, train


def verdict(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def synth_model(task, variant="hrne", hidden=64, seed=0, attention=(False, False, False)):
    vocab = Vocabulary(task.names)
    dim = task.prototypes.shape[1]
    enc = EncoderConfig(input_dim=dim, embed_dim=hidden // 2, hidden1=hidden, hidden2=hidden,
                        chunk_len=8, stride=8, variant=variant, attention=attention)
    dec = DecoderConfig(vocab_size=len(vocab), embed_dim=hidden // 2, hidden=hidden, out_dim=hidden // 2,
                        max_len=10)
    return CaptionModel.create(enc, dec, vocab, seed=seed)


# 1 ---------------------------------------------------------------------------

def test_criterion_1_path_lengths(capsys):
    outputs = []
    for T, n in ((1000, 30), (9, 3)):
        code = main(["analyze", "--T", str(T), "--n", str(n)])
        outputs.append((code, capsys.readouterr().out.strip()))
    ok = (outputs == [(0, "hrne=64 stacked=1001"), (0, "hrne=6 stacked=10")]
          and path_length(1000, 30) == (64, 1001) and path_length(9, 3) == (6, 10))
    verdict(1, ok, f"analyze (1000,30) -> {outputs[0][1]!r}; (9,3) -> {outputs[1][1]!r}")


# 2 ---------------------------------------------------------------------------

def test_criterion_2_gradients():
    start = time.perf_counter()
    rep = run_gradcheck(seed=0)
    elapsed = time.perf_counter() - start
    verdict(2, rep.passed and elapsed < 120,
            f"max relative error {rep.max_error:.2e} ({rep.worst}) over {len(rep.errors)} tensors / "
            f"{rep.num_scalars} scalars, {elapsed:.1f}s")


# 3 ---------------------------------------------------------------------------

def test_criterion_3_overfit_single_clip():
    task = synth_generate(make_rng(0), 1, num_segments=4, dim=16)
    vocab = Vocabulary(task.names)
    enc = EncoderConfig(input_dim=16, embed_dim=16, hidden1=32, hidden2=32)
    dec = DecoderConfig(vocab_size=len(vocab), embed_dim=16, hidden=32, out_dim=16)
    model = CaptionModel.create(enc, dec, vocab, seed=0)
    start = time.perf_counter()
    res = train(model, task.examples, TrainConfig(batch_size=1, max_epochs=2000, dropout=0.0, lr=1e-3,
                                                  patience=None), max_updates=2000)
    elapsed = time.perf_counter() - start
    caption = model.generate([task.examples[0].features])[0]
    ok = (res.updates <= 2000 and res.batch_losses[-1] < 0.05 and caption == task.examples[0].tokens
          and elapsed < 120)
    verdict(3, ok, f"loss {res.batch_losses[-1]:.4f} after {res.updates} steps, greedy {caption} "
                   f"vs {task.examples[0].tokens}, {elapsed:.1f}s")


# 4 ---------------------------------------------------------------------------

ORDER_TRAIN = TrainConfig(batch_size=32, max_epochs=50, dropout=0.0, lr=5e-3, patience=None)


def order_task_run(seed):
    task = synth_generate(make_rng(seed), 640, num_segments=4, segment_len=8, dim=16, num_prototypes=8)
    train_set, test_set = task.examples[:512], task.examples[512:]
    scores = {}
    for variant in ("hrne", "meanpool"):
        model = synth_model(task, variant, hidden=64, seed=seed)
        cfg = TrainConfig(**{**ORDER_TRAIN.__dict__, "seed": seed})
        train(model, train_set, cfg)
        scores[variant] = evaluate(model, test_set, "token_accuracy")
    return scores


def test_criterion_4_order_sensitivity():
    runs, times = [], []
    for seed in range(5):
        start = time.perf_counter()
        runs.append(order_task_run(seed))
        times.append(time.perf_counter() - start)
    wins = [r["hrne"] >= 0.90 and r["hrne"] - r["meanpool"] >= 0.10 for r in runs]
    detail = ", ".join(f"seed {i}: hrne {r['hrne']:.3f} / meanpool {r['meanpool']:.3f}" for i, r in enumerate(runs))
    verdict(4, sum(wins) >= 4 and max(times) < 15 * 60,
            f"{sum(wins)}/5 runs pass ({detail}); slowest run (both models) {max(times):.0f}s")


# 5 ---------------------------------------------------------------------------

def test_criterion_5_permutation_contrast():
    task = synth_generate(make_rng(11), 1)
    frames = task.examples[0].features
    rng = make_rng(12)
    mp = EncoderConfig(input_dim=16, embed_dim=32, variant="meanpool")
    hr = EncoderConfig(input_dim=16, embed_dim=32, hidden1=64, hidden2=64)
    p_mp = {k: rng.uniform(-0.08, 0.08, s) for k, s in encoder_param_shapes(mp).items()}
    p_hr = {k: rng.uniform(-0.08, 0.08, s) for k, s in encoder_param_shapes(hr).items()}
    mp_gap = max(np.max(np.abs(encode_meanpool(p_mp, mp, frames[rng.permutation(32)]).v
                               - encode_meanpool(p_mp, mp, frames).v)) for _ in range(20))
    swapped = frames.reshape(4, 8, 16)[[1, 0, 3, 2]].reshape(32, 16)
    hr_gap = np.max(np.abs(encode_hrne(p_hr, hr, swapped).v - encode_hrne(p_hr, hr, frames).v))
    verdict(5, mp_gap <= 1e-9 and hr_gap > 1e-6,
            f"meanpool max |dv| under 20 frame permutations {mp_gap:.1e}; hrne |dv| for a segment swap {hr_gap:.1e}")


# 6 ---------------------------------------------------------------------------

def test_criterion_6_attention_properties():
    rng = make_rng(6)
    worst = {"positive": True, "sum": 0.0, "shift": 0.0, "hull": 0.0}
    for _ in range(1000):
        m, Dx, Dh = rng.integers(1, 12), rng.integers(1, 7), rng.integers(1, 7)
        scale = rng.choice([0.1, 1.0, 5.0])
        p = rand_attention(rng, Dx, Dh, scale=scale)
        items = rng.standard_normal((m, Dx)) * scale
        h = rng.standard_normal(Dh)
        scores = attention_scores(p, items, h)
        w = attention_weights(scores)
        worst["positive"] &= bool(np.all(w > 0))
        worst["sum"] = max(worst["sum"], abs(w.sum() - 1.0))
        shift = rng.uniform(-100, 100)
        worst["shift"] = max(worst["shift"], np.max(np.abs(attention_weights(scores + shift) - w)))
        ctx = attention_context(w, items)
        excess = np.maximum(items.min(0) - ctx, 0) + np.maximum(ctx - items.max(0), 0)
        worst["hull"] = max(worst["hull"], excess.max())
        assert np.allclose(attend(p, items, h)[0], ctx, rtol=0, atol=1e-12)
    ok = worst["positive"] and worst["sum"] <= 1e-6 and worst["shift"] <= 1e-9 and worst["hull"] <= 1e-12
    verdict(6, ok, f"1000 instances: positive={worst['positive']}, max |sum-1| {worst['sum']:.1e}, "
                   f"max shift change {worst['shift']:.1e}, max hull excess {worst['hull']:.1e}")


# 7 ---------------------------------------------------------------------------

def test_criterion_7_bleu():
    pairs = toy_pairs()
    identical = corpus_bleu([(refs[0], refs) for _, refs in pairs], 4).bleu
    repeated = bleu_n(["a", "a", "a"], [["a"]], 1)
    toy = corpus_bleu(pairs, 4).bleu
    oracle = oracle_corpus_bleu(pairs, 4)
    ok = identical == [1.0] * 4 and abs(repeated - 1 / 3) < 1e-15 and toy == oracle
    verdict(7, ok, f"identical corpus {identical}; 'a a a' vs 'a' BLEU@1 {repeated:.6f}; "
                   f"toy corpus {[round(x, 6) for x in toy]} == oracle: {toy == oracle}")


# 8 ---------------------------------------------------------------------------

def test_criterion_8_checkpoint(tmp_path):
    task = synth_generate(make_rng(8), 16, num_segments=2)
    model = synth_model(task, hidden=16, attention=(True, True, True))
    train(model, task.examples, TrainConfig(batch_size=8, max_epochs=3, dropout=0.5, lr=1e-2))
    ckpt = Checkpoint.from_model(model)
    save_checkpoint(tmp_path / "m.ckpt", ckpt)
    back = load_checkpoint(tmp_path / "m.ckpt")
    same_tensors = list(back.tensors) == list(ckpt.tensors) and all(
        back.tensors[k].tobytes() == ckpt.tensors[k].tobytes() for k in ckpt.tensors)
    videos = [ex.features for ex in task.examples]
    same_gen = ckpt.to_model().generate(videos) == back.to_model().generate(videos)
    raw = (tmp_path / "m.ckpt").read_bytes()
    raised = {}
    for label, data in (("magic", b"XXXX" + raw[4:]), ("version", raw[:4] + (999).to_bytes(4, "little") + raw[8:]),
                        ("truncation", raw[:-7])):
        try:
            decode_checkpoint(data)
            raised[label] = None
        except FormatError as exc:
            raised[label] = type(exc)
    distinct = raised == {"magic": FormatError, "version": UnsupportedVersionError,
                          "truncation": TruncatedFileError}
    verdict(8, same_tensors and same_gen and distinct,
            f"{len(ckpt.tensors)} tensors bit-identical: {same_tensors}; generation identical: {same_gen}; "
            f"errors {{{', '.join(f'{k}: {v.__name__ if v else None}' for k, v in raised.items())}}}")


# 9 ---------------------------------------------------------------------------

class _ZeroMasks(Dropout):
    def __init__(self):
        super().__init__(0.5, make_rng(0))
        self.shapes = {}

    def mask(self, site, shape):
        super().mask(site, shape)
        self.shapes[site] = tuple(shape)
        return np.zeros(shape)


def test_criterion_9_dropout_placement():
    task = synth_generate(make_rng(9), 2, num_segments=3)
    model = synth_model(task, hidden=8)
    rng = make_rng(1)
    for name in model.params:
        model.params[name] = rng.uniform(-1, 1, model.params[name].shape)
    xs = np.stack([ex.features for ex in task.examples])
    caps = np.array([model.wrap(ex.tokens) for ex in task.examples])
    drop = _ZeroMasks()
    _, etape, dtape, _, _ = model._forward(xs, caps, drop)
    t1, t2, td = etape.extra["tape1"], etape.extra["tape2"], dtape.lstm_tape
    boundaries = {"enc1.input": etape.emb.shape, "enc1.output": t1.hs.shape, "enc2.output": t2.hs.shape,
                  "dec.input": td.xs.shape, "dec.output": td.hs.shape}
    structural = set(drop.sites) == set(SITES) and drop.shapes == boundaries
    recurrent_alive = all(not t.xs.any() and np.max(np.abs(t.hs[1] - t.hs[0])) > 1e-3 for t in (t1, t2, td))
    mc_rng = make_rng(0)
    samples = np.stack([dropout_apply(mc_rng, 0.5, np.ones(8)) for _ in range(10_000)])
    mc_dev = float(np.max(np.abs(samples.mean(axis=0) - 1.0)))
    verdict(9, structural and recurrent_alive and mc_dev <= 0.02,
            f"mask sites {sorted(drop.shapes)} match LSTM input/output shapes: {structural}; "
            f"recurrent paths live under all-zero masks: {recurrent_alive}; MC max deviation {mc_dev:.4f}")


# 10 --------------------------------------------------------------------------

def test_criterion_10_determinism(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path / "data"), "--num", "24", "--segments", "3", "--seed", "4"]) == 0
    (tmp_path / "run.cfg").write_text("hidden = 16\nembed = 8\nout_dim = 8\nbatch_size = 8\n"
                                      "max_epochs = 3\nlr = 5e-3\nmax_frames = 0\nseed = 10\n")
    reports = []
    for tag in ("a", "b"):
        code = main(["train", "--config", str(tmp_path / "run.cfg"), "--data", str(tmp_path / "data"),
                     "--manifest", str(tmp_path / "data" / "manifest.tsv"), "--out", str(tmp_path / f"{tag}.ckpt"),
                     "--report", str(tmp_path / f"{tag}.txt")])
        assert code == 0
        reports.append(dict(line.split(": ", 1) for line in (tmp_path / f"{tag}.txt").read_text().splitlines()))
    capsys.readouterr()
    curves = [r["loss_curve"].split(",") for r in reports]
    same_curve = curves[0] == curves[1]
    same_ckpt = (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    verdict(10, same_curve and same_ckpt,
            f"{len(curves[0])} batch losses identical (repr round-trips float64 exactly): {same_curve}; "
            f"checkpoints byte-identical: {same_ckpt}")
