"""
Path lengths through a hierarchical encoder
===========================================

A stacked LSTM has to carry the first frame's influence through every later
cell before it reaches the video vector. Splitting the video into chunks,
summarising each chunk with a short LSTM "filter" and running a second LSTM
over the chunk summaries cuts that path to ``n + ceil(T / n)`` cells.
"""

# %%
# The formula
# -----------

from hrne.encoder import EncoderConfig, chunk_sequence, encode_hrne, encode_stacked, encoder_param_shapes, path_length
from hrne.numerics import make_rng
from hrne.recurrent import counting_cells

for T, n in [(1000, 30), (9, 3), (160, 8), (40, 40)]:
    hrne, stacked = path_length(T, n)
    print(f"T={T:5d} n={n:3d}:  hierarchical {hrne:5d} cells   stacked {stacked:5d} cells")

# %%
# The chunk length that minimises the path is about sqrt(T).

T = 1000
best = min(range(1, T + 1), key=lambda n: path_length(T, n)[0])
print("best chunk length for T=1000:", best, "->", path_length(T, best)[0], "cells")

# %%
# Chunking
# --------
# A final chunk that is only partly filled is zero-padded; the pad mask keeps
# those steps out of the chunk summary.

import numpy as np

frames = np.arange(10, dtype=float)[:, None]
chunks = chunk_sequence(frames, 4, 4)
print(chunks.chunks[..., 0])
print(chunks.pad_mask.astype(int))

# %%
# Counting cell evaluations
# -------------------------
# Both encoders are instrumented, so the work they do can be compared
# directly: the hierarchical one runs ``n * ceil(T/n)`` filter cells and
# ``ceil(T/n)`` top-level cells, the stacked one ``2 T``.

rng = make_rng(0)
xs = rng.standard_normal((100, 16))
for variant in ("hrne", "stacked"):
    cfg = EncoderConfig(input_dim=16, embed_dim=8, hidden1=16, hidden2=16, chunk_len=10, stride=10,
                        variant=variant)
    params = {k: rng.uniform(-0.1, 0.1, s) for k, s in encoder_param_shapes(cfg).items()}
    encode = encode_hrne if variant == "hrne" else encode_stacked
    with counting_cells() as counter:
        encode(params, cfg, xs)
    print(variant, dict(counter.counts))
