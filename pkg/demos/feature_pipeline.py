"""
From feature files to captions
==============================

The file-based path: per-clip feature files plus a tab-separated manifest,
driven through the same command-line entry point a shell user would call.
Everything is written to a temporary directory.
"""

# %%
# Writing a dataset
# -----------------
# ``synth`` writes ``<id>.feat`` files (magic ``HRNF``, float32 frames) and a
# ``manifest.tsv`` with one ``id<TAB>caption`` line per reference.

import tempfile
from pathlib import Path

from hrne.cli import main
from hrne.data import build_vocab, load_dataset, load_features, tokenize

work = Path(tempfile.mkdtemp())
main(["synth", "--out", str(work / "data"), "--num", "64", "--segments", "3", "--seed", "1"])
print((work / "data" / "manifest.tsv").read_text().splitlines()[:3])
print("first clip:", load_features(work / "data" / "clip00000.feat").shape)

# %%
# Captions are lowercased and stripped of punctuation before they reach the
# vocabulary.

print(tokenize("A man is Swimming."), tokenize("don't stop"))
data = load_dataset(work / "data", work / "data" / "manifest.tsv", max_frames=None)
print("vocabulary:", build_vocab([ex.tokens for ex in data]).itos)

# %%
# Train, caption, score
# ---------------------
# Settings come from a ``key = value`` file; flags override it. The captions
# here are three words long, so there are no 4-grams and unsmoothed BLEU@4 is 0.

(work / "small.cfg").write_text(
    "# a desk-sized model\n"
    "hidden = 32\nembed = 16\nout_dim = 16\n"
    "batch_size = 16\nmax_epochs = 40\nlr = 1e-2\ndropout = 0\npatience = none\n"
    "max_frames = 0   # keep clips at their own length\n"
)
main(["train", "--config", str(work / "small.cfg"), "--data", str(work / "data"),
      "--manifest", str(work / "data" / "manifest.tsv"), "--out", str(work / "model.ckpt"),
      "--report", str(work / "train.txt")])
main(["generate", "--ckpt", str(work / "model.ckpt"), "--features", str(work / "data" / "clip00000.feat")])
main(["evaluate", "--ckpt", str(work / "model.ckpt"), "--data", str(work / "data"),
      "--manifest", str(work / "data" / "manifest.tsv")])
