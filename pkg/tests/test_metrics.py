import math
from collections import Counter

import numpy as np
import pytest

from motrans.metrics import bleu, clipped_precision, perplexity


def reference_bleu(hyps, refs):
    """Straightforward corpus BLEU-4 written independently of the package."""
    num = [0] * 4
    den = [0] * 4
    c = r = 0
    for h, ref in zip(hyps, refs):
        c += len(h)
        r += len(ref)
        for n in range(1, 5):
            hg = Counter(tuple(h[i : i + n]) for i in range(len(h) - n + 1))
            rg = Counter(tuple(ref[i : i + n]) for i in range(len(ref) - n + 1))
            num[n - 1] += sum(min(v, rg[k]) for k, v in hg.items())
            den[n - 1] += sum(hg.values())
    if 0 in num:
        return 0.0
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return 100 * bp * math.exp(sum(math.log(a / b) for a, b in zip(num, den)) / 4)


def test_identical_corpus_scores_100():
    refs = [list("abcdef"), list("hello world")]
    assert bleu(refs, refs) == pytest.approx(100.0)


def test_clipped_precision_textbook_case():
    hyp = "the the the the the the the".split()
    ref = "the cat is on the mat".split()
    assert clipped_precision(hyp, ref, 1) == (2, 7)


def test_no_overlap_is_zero():
    assert bleu([[1, 2, 3, 4]], [[5, 6, 7, 8]]) == 0.0


def test_brevity_penalty():
    ref = list(range(10))
    hyp = list(range(5))
    assert bleu([hyp], [ref]) == pytest.approx(100 * math.exp(1 - 10 / 5))


def test_matches_reference_on_random_pairs():
    rng = np.random.default_rng(7)
    hyps, refs = [], []
    for _ in range(50):
        ref = list(rng.integers(0, 6, size=rng.integers(4, 15)))
        hyp = list(ref)
        for _ in range(rng.integers(0, 4)):
            hyp[rng.integers(len(hyp))] = int(rng.integers(0, 6))
        if rng.random() < 0.3:
            hyp = hyp[: max(1, len(hyp) - 2)]
        hyps.append(hyp)
        refs.append(ref)
    assert bleu(hyps, refs) == pytest.approx(reference_bleu(hyps, refs), rel=1e-12)


def test_bleu_input_errors():
    with pytest.raises(ValueError):
        bleu([], [])
    with pytest.raises(ValueError):
        bleu([[1]], [[1], [2]])


@pytest.mark.parametrize("v", [2, 10, 100])
def test_perplexity_of_uniform_is_vocab_size(v):
    assert perplexity(math.log(v)) == pytest.approx(v)


def test_perplexity_rejects_negative():
    assert perplexity(0.0) == 1.0
    with pytest.raises(ValueError):
        perplexity(-0.1)
    with pytest.raises(ValueError):
        perplexity(float("nan"))
