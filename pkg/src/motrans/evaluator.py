"""Genome evaluators: a closed-form surrogate and a train-and-measure neural evaluator.

Both satisfy the :class:`Evaluator` protocol: ``evaluate(genome)`` returns
:class:`EvalMetrics` and is a pure function of the genome's flat encoding
and the evaluator's construction-time state.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Protocol, Sequence

import numpy as np

from . import metrics
from .data import BOS, EOS, PAD, Corpus
from .genome import Genome, TrainConfig, encode_flat, param_count
from .nn import autodiff as ad
from .nn import model as M
from .nn.optim import Adam
from .variation import aligned_index

log = logging.getLogger(__name__)

# Perplexity reported for failed or diverged evaluations.
PERPLEXITY_SENTINEL = 1e9


@dataclass(frozen=True)
class EvalMetrics:
    bleu: float
    perplexity: float
    param_count: int
    epochs_run: int = 0
    val_loss_trace: tuple[float, ...] = ()
    failed: bool = False

    def to_json(self) -> dict:
        d = asdict(self)
        d["val_loss_trace"] = list(self.val_loss_trace)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "EvalMetrics":
        d = dict(d)
        d["val_loss_trace"] = tuple(d.get("val_loss_trace", ()))
        return cls(**d)


def failure_metrics(params: int = 0, trace: Sequence[float] = (), epochs: int = 0) -> EvalMetrics:
    return EvalMetrics(0.0, PERPLEXITY_SENTINEL, params, epochs, tuple(trace), failed=True)


class Evaluator(Protocol):
    def evaluate(self, g: Genome) -> EvalMetrics: ...


def to_objectives(m: EvalMetrics, k: float) -> tuple[float, float]:
    """Minimization objectives (100 - BLEU, k * perplexity)."""
    return (100.0 - m.bleu, k * m.perplexity)


# --------------------------------------------------------------------------
# surrogate


def aligned_hits(g: Genome) -> int:
    """Non-last decoder blocks wired to their aligned encoder."""
    return sum(1 for i, b in enumerate(g.decoders[:-1], 1) if b.ce == aligned_index(i, g.ne, g.nd))


class SurrogateEvaluator:
    """Deterministic stand-in for training.

    Depth raises the score (``100 * (1 - 2**(-L/4)) + 2 * A``, capped at 100)
    while parameters raise perplexity (``1 + params / 1e6``), so the two
    objectives conflict.
    """

    def __init__(self, embed_dim: int = 512, src_vocab: int = 1000, tgt_vocab: int = 1000):
        self.embed_dim = embed_dim
        self.src_vocab = src_vocab
        self.tgt_vocab = tgt_vocab

    def evaluate(self, g: Genome) -> EvalMetrics:
        n_layers = g.layer_count
        score = min(100.0, 100.0 * (1.0 - 2.0 ** (-n_layers / 4)) + 2.0 * aligned_hits(g))
        params = param_count(g, self.embed_dim, self.src_vocab, self.tgt_vocab)
        return EvalMetrics(score, 1.0 + params / 1e6, params)


# --------------------------------------------------------------------------
# neural


class EarlyStopping:
    """Stop once validation loss has failed to improve for ``patience`` epochs."""

    def __init__(self, patience: int = 2):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.epoch = 0
        self.bad = 0

    def step(self, val_loss: float) -> bool:
        """Record one epoch; True means stop now."""
        self.epoch += 1
        if val_loss < self.best:
            self.best, self.best_epoch, self.bad = val_loss, self.epoch, 0
        else:
            self.bad += 1
        return self.bad >= self.patience


def epochs_until_stop(trace: Sequence[float], patience: int, max_epochs: int) -> int:
    stopper = EarlyStopping(patience)
    for e, v in enumerate(trace, 1):
        if stopper.step(v) or e >= max_epochs:
            return e
    return min(len(trace), max_epochs)


def pad_batch(seqs: Sequence[Sequence[int]]) -> np.ndarray:
    out = np.full((len(seqs), max(len(s) for s in seqs)), PAD, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out


def greedy_decode(model: M.Transformer, src: Sequence[Sequence[int]], max_len: int, bos: int = BOS, eos: int = EOS) -> list[list[int]]:
    """Argmax decoding (ties -> lowest id) until ``eos`` or ``max_len`` tokens.

    The emitted ``eos`` is kept in the returned sequence.
    """
    if max_len < 1:
        return [[] for _ in src]
    src_arr = pad_batch(src)
    n = len(src)
    with ad.no_grad():
        memories, src_pad = model.encode(src_arr)
        ys = np.full((n, 1), bos, dtype=np.int64)
        done = np.zeros(n, dtype=bool)
        out: list[list[int]] = [[] for _ in range(n)]
        for _ in range(max_len):
            logits = model.decode(memories, src_pad, ys).data[:, -1, :]
            nxt = logits.argmax(axis=-1)
            for i in np.nonzero(~done)[0]:
                out[i].append(int(nxt[i]))
            done |= nxt == eos
            if done.all():
                break
            ys = np.concatenate([ys, np.where(done, PAD, nxt)[:, None]], axis=1)
    return out


def strip_special(ids: Sequence[int]) -> list[int]:
    out = []
    for t in ids:
        if t == EOS:
            break
        if t not in (PAD, BOS):
            out.append(int(t))
    return out


def _batches(pairs, batch_size: int, rng: np.random.Generator | None):
    idx = np.arange(len(pairs)) if rng is None else rng.permutation(len(pairs))
    for s in range(0, len(pairs), batch_size):
        chunk = [pairs[i] for i in idx[s : s + batch_size]]
        yield pad_batch([p[0] for p in chunk]), pad_batch([p[1] for p in chunk])


def validation_loss(model: M.Transformer, pairs, batch_size: int) -> float:
    """Token-weighted mean cross entropy over ``pairs``."""
    total, count = 0.0, 0
    with ad.no_grad():
        for src, tgt in _batches(pairs, batch_size, None):
            n = int((tgt[:, 1:] != PAD).sum())
            total += float(model.loss(src, tgt).data) * n
            count += n
    return total / count


@dataclass
class TrainResult:
    trace: list[float] = field(default_factory=list)
    best_loss: float = math.inf
    epochs_run: int = 0
    diverged: bool = False


def train(model: M.Transformer, corpus: Corpus, cfg: TrainConfig, rng: np.random.Generator) -> TrainResult:
    """Adam on teacher-forced loss with early stopping; leaves the best epoch's weights in ``model``."""
    opt = Adam(model.parameters(), lr=cfg.learning_rate, clip_norm=cfg.clip_norm or None)
    stopper = EarlyStopping(cfg.patience)
    res = TrainResult()
    best = {k: t.data.copy() for k, t in model.params.items()}
    for _ in range(cfg.max_epochs):
        for src, tgt in _batches(corpus.train, cfg.batch_size, rng):
            opt.zero_grad()
            loss = model.loss(src, tgt)
            if not np.isfinite(loss.data):
                res.diverged = True
                return res
            loss.backward()
            opt.step()
        v = validation_loss(model, corpus.valid, cfg.batch_size)
        res.trace.append(v)
        res.epochs_run += 1
        if not math.isfinite(v):
            res.diverged = True
            return res
        stop = stopper.step(v)
        if stopper.best_epoch == stopper.epoch:
            best = {k: t.data.copy() for k, t in model.params.items()}
            res.best_loss = v
        if stop:
            break
    for k, t in model.params.items():
        t.data[...] = best[k]
    return res


def corpus_bleu(model: M.Transformer, pairs, max_len: int, batch_size: int = 64) -> float:
    hyps, refs = [], []
    for s in range(0, len(pairs), batch_size):
        chunk = pairs[s : s + batch_size]
        outs = greedy_decode(model, [p[0] for p in chunk], max_len)
        hyps += [strip_special(o) for o in outs]
        refs += [strip_special(p[1]) for p in chunk]
    return metrics.bleu(hyps, refs)


def genome_seed(seed: int, g: Genome) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed & 0xFFFFFFFF, *encode_flat(g, check=False)])


def neural_evaluate(g: Genome, corpus: Corpus, embed_dim: int, cfg: TrainConfig, seed: int = 0) -> EvalMetrics:
    """Train the genome's model, then report BLEU (greedy, validation split) and best-epoch perplexity."""
    if not corpus.valid:
        raise ValueError("corpus has no validation split")
    init_seq, shuffle_seq = genome_seed(seed, g).spawn(2)
    plan = M.build_plan(g, embed_dim, len(corpus.src_vocab), len(corpus.tgt_vocab))
    model = M.Transformer(plan, M.init_params(plan, np.random.default_rng(init_seq)))
    n_params = model.num_params()
    with np.errstate(over="ignore", invalid="ignore"):
        res = train(model, corpus, cfg, np.random.default_rng(shuffle_seq))
    if res.diverged:
        log.warning("training diverged for genome %s", g)
        return failure_metrics(n_params, res.trace, res.epochs_run)
    max_len = cfg.decode_max_len or max(len(p[1]) for p in corpus.valid)
    score = corpus_bleu(model, corpus.valid, max_len)
    return EvalMetrics(
        bleu=score,
        perplexity=metrics.perplexity(res.best_loss),
        param_count=n_params,
        epochs_run=res.epochs_run,
        val_loss_trace=tuple(res.trace),
    )


class NeuralEvaluator:
    """Trains each genome on ``corpus``; randomness derives from (seed, flat encoding)."""

    def __init__(self, corpus: Corpus, embed_dim: int = 32, train_cfg: TrainConfig | None = None, seed: int = 0):
        self.corpus = corpus
        self.embed_dim = embed_dim
        self.train_cfg = train_cfg or TrainConfig()
        self.seed = seed

    def evaluate(self, g: Genome) -> EvalMetrics:
        return neural_evaluate(g, self.corpus, self.embed_dim, self.train_cfg, self.seed)
