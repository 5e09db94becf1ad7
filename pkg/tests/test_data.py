import pytest

from motrans.data import (
    BOS,
    EOS,
    PAD,
    UNK,
    CorpusError,
    build_vocab,
    gen_synthetic,
    load_jsonl,
    load_tsv,
    save_jsonl,
    task_target,
)


def test_reserved_ids():
    v = build_vocab([["a", "b"]])
    assert (PAD, BOS, EOS, UNK) == (0, 1, 2, 3)
    assert v.itos[:4] == ["<pad>", "<bos>", "<eos>", "<unk>"]
    assert v.encode(["a", "zzz"])[1] == UNK


def test_task_targets():
    src = (7, 5, 9)
    assert task_target("copy", src) == (BOS, 7, 5, 9, EOS)
    assert task_target("reverse", src) == (BOS, 9, 5, 7, EOS)
    assert task_target("sort", src) == (BOS, 5, 7, 9, EOS)


def test_synthetic_corpus_shape():
    c = gen_synthetic("reverse", 200, 12, (2, 5), seed=3)
    assert len(c.train) == 180 and len(c.valid) == 20
    srcs = [s for s, _ in c.train + c.valid]
    assert len(set(srcs)) == 200
    for s, t in c.train + c.valid:
        assert 2 <= len(s) <= 5
        assert all(4 <= x < 12 for x in s)
        assert t == task_target("reverse", s)
    assert len(c.src_vocab) == 12
    assert gen_synthetic("reverse", 200, 12, (2, 5), seed=3).train == c.train


@pytest.mark.parametrize(
    "args",
    [("shuffle", 10, 8), ("copy", 10, 4), ("copy", 1, 8), ("copy", 100, 5, (1, 1))],
)
def test_synthetic_rejects_impossible_requests(args):
    with pytest.raises(CorpusError):
        gen_synthetic(*args)


def test_tsv_loading(tmp_path):
    p = tmp_path / "pairs.tsv"
    lines = [f"a b c{i}\tx y z{i}" for i in range(10)]
    p.write_text("\n".join(lines) + "\n\n", encoding="utf-8")
    c = load_tsv(p)
    assert len(c.train) == 9 and len(c.valid) == 1
    s, t = c.train[0]
    assert c.src_vocab.decode(s) == ["a", "b", "c0"]
    assert t[0] == BOS and t[-1] == EOS
    # the held-out pair's unseen words map to unk
    assert UNK in c.valid[0][0]


def test_tsv_min_freq(tmp_path):
    p = tmp_path / "pairs.tsv"
    # the last line is held out, so counts come from the first two
    p.write_text("a a b\tx\na c\tx\nb c\tx y\n", encoding="utf-8")
    v = load_tsv(p, min_freq=2).src_vocab
    assert "a" in v.stoi and "b" not in v.stoi and "c" not in v.stoi


def test_tsv_error_names_line(tmp_path):
    p = tmp_path / "bad.tsv"
    p.write_text("a\tb\nno tab here\n", encoding="utf-8")
    with pytest.raises(CorpusError, match=":2:"):
        load_tsv(p)


def test_jsonl_cache_round_trip(tmp_path):
    c = gen_synthetic("copy", 30, 10, seed=1)
    save_jsonl(c, tmp_path / "c.jsonl")
    d = load_jsonl(tmp_path / "c.jsonl")
    assert d.train == c.train and d.valid == c.valid
    assert d.src_vocab.itos == c.src_vocab.itos
