"""BLEU (sentence and corpus level) and positional token accuracy."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .errors import ConfigError, InputError


def ngram_counts(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _closest_ref_len(c: int, references) -> int:
    # ties resolve to the shorter reference
    return min((abs(len(r) - c), len(r)) for r in references)[1]


def _stats(candidate, references, max_n):
    """Clipped matches and totals per order 1..max_n, plus (c, r) lengths."""
    matches, totals = [], []
    for n in range(1, max_n + 1):
        cand = ngram_counts(candidate, n)
        max_ref = Counter()
        for ref in references:
            max_ref |= ngram_counts(ref, n)
        matches.append(sum(min(c, max_ref[g]) for g, c in cand.items()))
        totals.append(max(len(candidate) - n + 1, 0))
    return matches, totals, len(candidate), _closest_ref_len(len(candidate), references)


@dataclass
class BleuReport:
    bleu: list[float]  # bleu[k] is BLEU@(k+1)
    brevity_penalty: float
    candidate_length: int
    reference_length: int
    precisions: list[float]

    def score(self, n: int) -> float:
        """BLEU@n, for n up to the order the report was computed with."""
        return self.bleu[n - 1]

    bleu1 = property(lambda self: self.score(1))
    bleu2 = property(lambda self: self.score(2))
    bleu3 = property(lambda self: self.score(3))
    bleu4 = property(lambda self: self.score(4))


def _combine(matches, totals, c, r, smooth: bool) -> BleuReport:
    max_n = len(matches)
    precisions = []
    for m, t in zip(matches, totals):
        if smooth:
            precisions.append((m + 1.0) / (t + 1.0))
        else:
            precisions.append(m / t if t else 0.0)
    if c == 0:
        bp = 0.0
    else:
        bp = 1.0 if c > r else math.exp(1.0 - r / c)
    scores = []
    for n in range(1, max_n + 1):
        ps = precisions[:n]
        if c == 0 or min(ps) == 0.0:
            scores.append(0.0)
        else:
            scores.append(bp * math.exp(sum(math.log(p) for p in ps) / n))
    return BleuReport(scores, bp if c else 1.0, c, r, precisions)


def _check(n, references):
    if not 1 <= n <= 4:
        raise ConfigError(f"BLEU order must be in 1..4, got {n}")
    if not references:
        raise InputError("BLEU needs at least one reference")


def bleu_n(candidate, references, n: int = 4, smooth: bool = False) -> float:
    """Sentence BLEU@n: clipped n-gram precisions, geometric mean, brevity penalty."""
    _check(n, references)
    if not candidate:
        return 0.0
    return _combine(*_stats(candidate, references, n), smooth).bleu[n - 1]


def corpus_bleu(pairs, n: int = 4, smooth: bool = False) -> BleuReport:
    """Corpus BLEU with counts pooled over all (candidate, references) pairs."""
    pairs = list(pairs)
    if not pairs:
        raise InputError("corpus_bleu needs at least one pair")
    matches, totals, c, r = [0] * n, [0] * n, 0, 0
    for candidate, references in pairs:
        _check(n, references)
        m, t, ci, ri = _stats(candidate, references, n)
        matches = [a + b for a, b in zip(matches, m)]
        totals = [a + b for a, b in zip(totals, t)]
        c += ci
        r += ri
    return _combine(matches, totals, c, r, smooth)


def token_accuracy(candidate, reference) -> float:
    """Positional matches over the longer length; 1.0 when both are empty."""
    longest = max(len(candidate), len(reference))
    if longest == 0:
        return 1.0
    return sum(a == b for a, b in zip(candidate, reference)) / longest


def mean_token_accuracy(candidates, references) -> float:
    pairs = list(zip(candidates, references, strict=True))
    if not pairs:
        raise InputError("no pairs to score")
    return sum(token_accuracy(c, r) for c, r in pairs) / len(pairs)
