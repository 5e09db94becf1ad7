"""Corpus BLEU and perplexity."""

from __future__ import annotations

import math
from collections import Counter
from typing import Hashable, Sequence


def ngram_counts(tokens: Sequence[Hashable], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(
    hypotheses: Sequence[Sequence[Hashable]],
    references: Sequence[Sequence[Hashable]],
    max_n: int = 4,
) -> float:
    """Corpus-level BLEU in [0, 100], single reference, no smoothing.

    Clipped n-gram matches and candidate n-gram totals are summed over the
    whole corpus before taking the geometric mean; the brevity penalty uses
    total reference and candidate lengths.
    """
    if len(hypotheses) != len(references):
        raise ValueError("hypotheses and references differ in length")
    if not hypotheses:
        raise ValueError("empty corpus")
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            h = ngram_counts(hyp, n)
            r = ngram_counts(ref, n)
            matches[n - 1] += sum(min(c, r[g]) for g, c in h.items())
            totals[n - 1] += max(len(hyp) - n + 1, 0)
    if min(matches) == 0:
        return 0.0
    log_p = sum(math.log(m / t) for m, t in zip(matches, totals)) / max_n
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return min(100.0, 100.0 * bp * math.exp(log_p))


def clipped_precision(hyp: Sequence[Hashable], ref: Sequence[Hashable], n: int) -> tuple[int, int]:
    """(clipped matches, candidate n-grams) for one sentence pair."""
    h = ngram_counts(hyp, n)
    r = ngram_counts(ref, n)
    return sum(min(c, r[g]) for g, c in h.items()), max(len(hyp) - n + 1, 0)


def perplexity(mean_nll: float) -> float:
    """exp of the mean per-token negative log-likelihood."""
    if not mean_nll >= 0:
        raise ValueError(f"mean_nll must be a non-negative number, got {mean_nll}")
    return math.exp(mean_nll)
