import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from admix_nmt.corpus import (
    PAD, UNK, VOCAB_HEADER, IngestionError, SentencePair, Vocab, build_vocab, collate, decode,
    encode, make_batches, read_parallel, write_parallel,
)
from admix_nmt.tensor_core import Rng


@pytest.fixture
def abb(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("a b b\n")
    return p


def test_vocab_frequency_order(abb):
    v = build_vocab([abb], min_freq=1)
    assert v.itos[:5] == ["<pad>", "<s>", "</s>", "<unk>", "<blank>"]
    assert v.words == ["b", "a"]


def test_vocab_min_freq(abb):
    assert build_vocab([abb], min_freq=2).words == ["b"]


def test_lexicographic_tiebreak_and_max_size(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("d c b a a\n")
    assert build_vocab([p]).words == ["a", "b", "c", "d"]
    assert build_vocab([p], max_size=2).words == ["a", "b"]


def test_empty_corpus_rejected(tmp_path):
    p = tmp_path / "empty.txt"
    p.write_text("\n\n")
    with pytest.raises(IngestionError):
        build_vocab([p])


def test_encode_and_unk(abb):
    v = build_vocab([abb])
    assert encode(v, "b a") == [v.id("b"), v.id("a")]
    assert encode(v, "a zzz") == [v.id("a"), UNK]
    assert v.id("zzz") == 3
    assert encode(v, "   ") is None


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from(["x", "y", "z", "w"]), min_size=1, max_size=15))
def test_decode_encode_roundtrip(tokens):
    v = Vocab(["w", "x", "y", "z"])
    line = " ".join(tokens)
    assert decode(v, encode(v, line)) == line


def test_vocab_file_roundtrip(tmp_path):
    v = Vocab(["b", "a", "ü"])
    path = tmp_path / "vocab.txt"
    v.save(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == VOCAB_HEADER
    assert lines[1:] == ["b", "a", "ü"]          # line index = id - 5
    assert Vocab.load(path).itos == v.itos


def test_vocab_file_without_header_rejected(tmp_path):
    path = tmp_path / "vocab.txt"
    path.write_text("a\nb\n")
    with pytest.raises(IngestionError):
        Vocab.load(path)


def test_read_parallel_skips_empty_and_checks_alignment(tmp_path):
    write_parallel(tmp_path / "d", [("a b", "x"), ("", "y"), ("c", "z z")])
    v = Vocab(["a", "b", "c", "x", "y", "z"])
    pairs = read_parallel(tmp_path / "d", v)
    assert len(pairs) == 2
    (tmp_path / "d.tgt").write_text("x\n")
    with pytest.raises(IngestionError):
        read_parallel(tmp_path / "d", v)
    with pytest.raises(FileNotFoundError, match="nope.src"):
        read_parallel(tmp_path / "nope", v)


def _pair(n_src, n_tgt, tok=7):
    return SentencePair(tuple([tok] * n_src), tuple([tok] * n_tgt))


def test_collate_shift_and_masks():
    b = collate([SentencePair((5, 6), (7, 8, 9)), SentencePair((5,), (7,))])
    assert b.tgt_in.tolist() == [[1, 7, 8, 9], [1, 7, 0, 0]]
    assert b.tgt_out.tolist() == [[7, 8, 9, 2], [7, 2, 0, 0]]
    assert torch.equal(b.src_mask, b.src_ids != PAD)
    assert torch.equal(b.tgt_mask, b.tgt_out != PAD)
    # tgt_in[t] is the gold token preceding tgt_out[t]
    assert b.tgt_in[0, 1:].tolist() == b.tgt_out[0, :-1].tolist()


def test_batch_budget_examples():
    pairs = [_pair(4, 5), _pair(3, 5)]
    assert [b.size for b in make_batches(pairs, 12, Rng(0))] == [2]
    assert sorted(b.size for b in make_batches(pairs, 6, Rng(0))) == [1, 1]


def test_batch_over_budget_names_line():
    with pytest.raises(IngestionError, match="line 2"):
        make_batches([_pair(2, 2), _pair(2, 9)], 6, Rng(0))


def test_batches_deterministic_under_seed():
    pairs = [_pair(3, n % 7 + 1, tok=5 + n % 4) for n in range(40)]
    a = [b.pairs for b in make_batches(pairs, 16, Rng(3))]
    b = [b.pairs for b in make_batches(pairs, 16, Rng(3))]
    assert a == b


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 9), st.integers(1, 9)), min_size=1, max_size=40),
       st.integers(10, 40), st.integers(0, 1000))
def test_batches_partition_and_respect_budget(lengths, budget, seed):
    pairs = [SentencePair(tuple(range(5, 5 + s)), tuple(range(5, 5 + t)) + (i + 100,)) for i, (s, t) in
             enumerate(lengths)]
    pairs = [p for p in pairs if len(p.tgt) + 1 <= budget]
    if not pairs:
        return
    batches = make_batches(pairs, budget, Rng(seed))
    seen = [p for b in batches for p in b.pairs]
    assert sorted(seen, key=lambda p: p.tgt[-1]) == sorted(pairs, key=lambda p: p.tgt[-1])
    for b in batches:
        assert b.tgt_out.numel() <= budget
        assert torch.equal(b.src_ids == PAD, ~b.src_mask)
        assert torch.equal(b.tgt_out == PAD, ~b.tgt_mask)
