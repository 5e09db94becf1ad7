"""Parallel corpora: synthetic seq2seq tasks, TSV ingestion, vocabularies."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")

Pair = tuple[tuple[int, ...], tuple[int, ...]]


class CorpusError(ValueError):
    pass


class Vocab:
    """Token <-> id map with fixed reserved ids pad=0, bos=1, eos=2, unk=3."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = list(RESERVED)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        for t in tokens:
            if t not in self.stoi:
                self.stoi[t] = len(self.itos)
                self.itos.append(t)

    def __len__(self) -> int:
        return len(self.itos)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.itos == other.itos

    def encode(self, tokens: Sequence[str]) -> tuple[int, ...]:
        return tuple(self.stoi.get(t, UNK) for t in tokens)

    def decode(self, ids: Sequence[int], strip: bool = True) -> list[str]:
        out = []
        for i in ids:
            if strip and i in (PAD, BOS):
                continue
            if strip and i == EOS:
                break
            out.append(self.itos[i])
        return out


def build_vocab(lines: Iterable[Sequence[str]], min_freq: int = 1) -> Vocab:
    """Vocabulary of tokens seen at least ``min_freq`` times, in first-seen order."""
    counts: Counter = Counter()
    order: dict[str, None] = {}
    for toks in lines:
        for t in toks:
            counts[t] += 1
            order.setdefault(t, None)
    return Vocab(t for t in order if counts[t] >= min_freq and t not in RESERVED)


@dataclass
class Corpus:
    train: list[Pair]
    valid: list[Pair]
    src_vocab: Vocab
    tgt_vocab: Vocab

    def check(self) -> None:
        for split in (self.train, self.valid):
            for src, tgt in split:
                if any(not 0 <= i < len(self.src_vocab) for i in src):
                    raise CorpusError("source id outside vocabulary")
                if any(not 0 <= i < len(self.tgt_vocab) for i in tgt):
                    raise CorpusError("target id outside vocabulary")
                if len(tgt) < 2 or tgt[0] != BOS or tgt[-1] != EOS:
                    raise CorpusError("target must start with bos and end with eos")


def _split(pairs: list, valid_fraction: float = 0.1) -> tuple[list, list]:
    n_valid = max(1, int(round(len(pairs) * valid_fraction))) if len(pairs) >= 2 else 0
    return pairs[: len(pairs) - n_valid], pairs[len(pairs) - n_valid :]


_TRANSFORMS = {
    "copy": lambda s: tuple(s),
    "reverse": lambda s: tuple(reversed(s)),
    "sort": lambda s: tuple(sorted(s)),
}
TASKS = tuple(_TRANSFORMS)


def task_target(task: str, src: Sequence[int]) -> tuple[int, ...]:
    return (BOS, *_TRANSFORMS[task](src), EOS)


def gen_synthetic(
    task: str,
    pairs: int,
    vocab_size: int,
    length_range: tuple[int, int] = (3, 10),
    seed: int = 0,
) -> Corpus:
    """Distinct random sources over ids [4, vocab_size) with task targets; 90/10 split."""
    if task not in _TRANSFORMS:
        raise CorpusError(f"unknown task {task!r}; choose from {TASKS}")
    lo, hi = length_range
    n_sym = vocab_size - len(RESERVED)
    if n_sym < 1:
        raise CorpusError(f"vocab_size must exceed {len(RESERVED)}")
    if not 1 <= lo <= hi:
        raise CorpusError(f"bad length range {length_range}")
    if pairs < 2:
        raise CorpusError("need at least 2 pairs for a train/validation split")
    capacity = sum(n_sym**n for n in range(lo, hi + 1))
    if pairs > capacity:
        raise CorpusError(f"cannot draw {pairs} distinct sources from {capacity}")
    rng = np.random.default_rng(seed)
    seen: set = set()
    out: list[Pair] = []
    while len(out) < pairs:
        n = int(rng.integers(lo, hi + 1))
        src = tuple(int(t) for t in rng.integers(len(RESERVED), vocab_size, size=n))
        if src in seen:
            continue
        seen.add(src)
        out.append((src, task_target(task, src)))
    train, valid = _split(out)
    vocab = Vocab(f"w{i}" for i in range(len(RESERVED), vocab_size))
    return Corpus(train, valid, vocab, vocab)


def load_tsv(path: str | Path, min_freq: int = 1, valid_fraction: float = 0.1) -> Corpus:
    """Read ``source<TAB>target`` lines; vocabularies come from the training split."""
    raw = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if "\t" not in line:
                raise CorpusError(f"{path}:{lineno}: missing tab separator")
            src, tgt = line.split("\t", 1)
            raw.append((src.split(), tgt.split()))
    if not raw:
        raise CorpusError(f"{path}: no sentence pairs")
    train_raw, valid_raw = _split(raw, valid_fraction)
    sv = build_vocab((s for s, _ in train_raw), min_freq)
    tv = build_vocab((t for _, t in train_raw), min_freq)

    def ids(pairs):
        return [(sv.encode(s), (BOS, *tv.encode(t), EOS)) for s, t in pairs]

    return Corpus(ids(train_raw), ids(valid_raw), sv, tv)


def save_jsonl(corpus: Corpus, path: str | Path) -> None:
    """Corpus cache: a header line with vocabularies, then one line per pair."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"src_vocab": corpus.src_vocab.itos, "tgt_vocab": corpus.tgt_vocab.itos}) + "\n")
        for split in ("train", "valid"):
            for src, tgt in getattr(corpus, split):
                fh.write(json.dumps({"split": split, "src": list(src), "tgt": list(tgt)}) + "\n")


def load_jsonl(path: str | Path) -> Corpus:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        splits: dict[str, list[Pair]] = {"train": [], "valid": []}
        for line in fh:
            rec = json.loads(line)
            splits[rec["split"]].append((tuple(rec["src"]), tuple(rec["tgt"])))
    sv, tv = Vocab(), Vocab()
    sv.itos, tv.itos = list(header["src_vocab"]), list(header["tgt_vocab"])
    sv.stoi = {t: i for i, t in enumerate(sv.itos)}
    tv.stoi = {t: i for i, t in enumerate(tv.itos)}
    return Corpus(splits["train"], splits["valid"], sv, tv)
