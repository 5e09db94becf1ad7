import math

import numpy as np
import pytest

from motrans.data import EOS, gen_synthetic
from motrans.evaluator import (
    PERPLEXITY_SENTINEL,
    EarlyStopping,
    EvalMetrics,
    NeuralEvaluator,
    SurrogateEvaluator,
    aligned_hits,
    epochs_until_stop,
    greedy_decode,
    neural_evaluate,
    strip_special,
    to_objectives,
    validation_loss,
)
from motrans.genome import DecoderBlockGene, EncoderBlockGene, Genome, TrainConfig, baseline_genome, param_count
from motrans.nn import Transformer


def test_objectives_from_metrics():
    m = EvalMetrics(34.79, 12.0, 100)
    f1, f2 = to_objectives(m, 0.5)
    assert f1 == pytest.approx(65.21)
    assert f2 == 6.0
    assert to_objectives(m, 0.0)[1] == 0.0


def test_surrogate_closed_form():
    g = baseline_genome(2, 2, 8, 512)
    # L = 2*2 + 2*3 = 10; the only non-last decoder reads encoder 2, aligned is 1
    assert aligned_hits(g) == 0
    m = SurrogateEvaluator().evaluate(g)
    assert m.bleu == pytest.approx(100 * (1 - 2 ** (-10 / 4)))
    assert m.perplexity == pytest.approx(1 + param_count(g, 512, 1000, 1000) / 1e6)


def test_surrogate_at_eight_layers():
    # 2*ne + 3*nd = 8 forces ne=1, nd=2, and the first decoder then reads its aligned encoder
    g = Genome(
        (EncoderBlockGene(4, 512, 512),),
        (DecoderBlockGene(1, 8, 8, 512, 1), DecoderBlockGene(1, 8, 8, 512, 1)),
    )
    assert g.layer_count == 8 and aligned_hits(g) == 1
    assert SurrogateEvaluator().evaluate(g).bleu == pytest.approx(75.0 + 2.0)


def test_surrogate_caps_at_100_and_counts_hits():
    enc = (EncoderBlockGene(1, 8, 512),) * 7
    aligned = tuple(DecoderBlockGene(1, 8, 8, 512, i) for i in range(1, 8))
    g = Genome(enc, aligned)
    assert aligned_hits(g) == 6
    assert SurrogateEvaluator().evaluate(g).bleu == 100.0


def test_heavier_ffn_raises_surrogate_perplexity():
    ev = SurrogateEvaluator()
    light = baseline_genome(3, 3, 8, 512)
    heavy = Genome(
        (*light.encoders[:-1], EncoderBlockGene(1, 8, 1024)),
        light.decoders,
    )
    assert ev.evaluate(heavy).perplexity > ev.evaluate(light).perplexity
    assert ev.evaluate(heavy).bleu == ev.evaluate(light).bleu


def test_early_stopping_trace():
    assert epochs_until_stop([3.0, 2.9, 2.95, 2.91], patience=2, max_epochs=10) == 4
    assert epochs_until_stop([3.0, 2.9, 2.8, 2.7], patience=2, max_epochs=3) == 3
    s = EarlyStopping(2)
    assert [s.step(v) for v in (3.0, 2.9, 2.95, 2.89, 2.9, 2.9)] == [False, False, False, False, False, True]
    assert s.best_epoch == 4


def test_untrained_perplexity_near_vocab_size():
    corpus = gen_synthetic("copy", 200, 16, seed=0)
    model = Transformer.from_genome(baseline_genome(1, 1, 2, 16), 16, 16, 16, seed=0)
    ppl = math.exp(validation_loss(model, corpus.valid, 16))
    assert 16 / 2 < ppl < 16 * 2


def test_greedy_decode_lengths_and_eos():
    model = Transformer.from_genome(baseline_genome(1, 1, 2, 16), 16, 12, 12, seed=1)
    src = [[4, 5, 6], [7, 8]]
    outs = greedy_decode(model, src, max_len=1)
    assert [len(o) for o in outs] == [1, 1]
    outs = greedy_decode(model, src, max_len=6)
    for o in outs:
        assert len(o) <= 6
        assert EOS not in o[:-1]
    assert greedy_decode(model, src, max_len=0) == [[], []]


def test_strip_special():
    assert strip_special([1, 5, 6, 0, 7, 2, 9]) == [5, 6, 7]


def test_neural_evaluate_is_deterministic_and_counts_params():
    corpus = gen_synthetic("copy", 120, 10, (2, 4), seed=0)
    g = baseline_genome(1, 1, 2, 16)
    cfg = TrainConfig(max_epochs=2)
    a = neural_evaluate(g, corpus, 16, cfg, seed=3)
    b = NeuralEvaluator(corpus, 16, cfg, seed=3).evaluate(g)
    assert a == b
    assert a.param_count == param_count(g, 16, 10, 10)
    assert a.epochs_run == 2 and len(a.val_loss_trace) == 2
    assert a.perplexity == pytest.approx(math.exp(min(a.val_loss_trace)))
    assert 0.0 <= a.bleu <= 100.0 and not a.failed


def test_divergence_reports_failure():
    corpus = gen_synthetic("copy", 60, 10, (2, 4), seed=0)
    cfg = TrainConfig(max_epochs=2, learning_rate=1e12, clip_norm=0.0)
    m = neural_evaluate(baseline_genome(1, 1, 2, 16), corpus, 16, cfg)
    if m.failed:
        assert m.perplexity == PERPLEXITY_SENTINEL and m.bleu == 0.0
    else:
        assert np.isfinite(m.perplexity)


def test_metrics_json_round_trip():
    m = EvalMetrics(12.5, 3.25, 1000, 3, (2.0, 1.5, 1.6), False)
    assert EvalMetrics.from_json(m.to_json()) == m
