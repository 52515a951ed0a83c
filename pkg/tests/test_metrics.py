import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import all_sequences, exhaustive_alignment_cost
from patwa.metrics import (
    corpus_summary,
    corpus_wer,
    edit_distance,
    replay,
    tokenize,
    wer_levenshtein,
    wer_positional,
)

words = st.lists(st.sampled_from("abcd"), max_size=8)


@pytest.mark.parametrize(
    "text, expected",
    [
        ("Di gyal dem!", ("di", "gyal", "dem")),
        ("", ()),
        ("   \t\n ", ()),
        ("Mi nuh know, star... WEH yuh a seh?", ("mi", "nuh", "know", "star", "weh", "yuh", "a", "seh")),
        ("dem's 'bout it'", ("dem's", "bout", "it")),
        ("dem’s", ("dem's",)),
        ("ｆｕｌｌ width", ("full", "width")),
        ("gyal-dem", ("gyal", "dem")),
    ],
)
def test_tokenize(text, expected):
    assert tokenize(text) == expected


@given(st.text())
def test_tokenize_idempotent(text):
    toks = tokenize(text)
    assert tokenize(" ".join(toks)) == toks
    assert all(t and not any(c.isspace() for c in t) for t in toks)


def test_positional_examples():
    assert wer_positional(("a", "b", "c"), ("a", "b", "c")).wer == 0.0
    assert wer_positional(("a", "x", "c"), ("a", "b", "c")).wer == pytest.approx(1 / 3)
    bd = wer_positional(tuple("xabcd"), tuple("abcd"))
    assert (bd.substitutions, bd.insertions, bd.deletions) == (4, 1, 0)
    assert bd.wer == 1.25


def test_positional_shorter_hypothesis():
    bd = wer_positional(("a",), ("a", "b", "c"))
    assert (bd.substitutions, bd.deletions, bd.insertions) == (0, 2, 0)


def test_levenshtein_examples():
    bd, al = wer_levenshtein(tuple("abc"), tuple("abc"))
    assert bd.wer == 0.0 and [op.kind for op in al] == ["match"] * 3

    bd, al = wer_levenshtein(tuple("xabcd"), tuple("abcd"))
    assert (bd.insertions, bd.substitutions, bd.deletions) == (1, 0, 0)
    assert bd.wer == 0.25
    assert al[0].kind == "insert" and al[0].hyp == "x"

    bd, _ = wer_levenshtein(("a", "c"), ("a", "b", "c"))
    assert (bd.deletions, bd.substitutions, bd.insertions) == (1, 0, 0)
    assert bd.wer == pytest.approx(1 / 3)


def test_empty_reference_rejected():
    with pytest.raises(ValueError, match="empty reference"):
        wer_levenshtein(("a",), ())
    with pytest.raises(ValueError, match="empty reference"):
        wer_positional(("a",), ())


def test_strings_are_tokenized():
    bd, _ = wer_levenshtein("Di gyal DEM", "di gyal dem!")
    assert bd.wer == 0.0


def test_tie_break_prefers_substitution_over_indel():
    bd, al = wer_levenshtein(("x",), ("a",))
    assert [op.kind for op in al] == ["substitute"]
    # insert+match+delete also costs 2
    bd, al = wer_levenshtein(("b", "a"), ("a", "b"))
    assert bd.errors == 2
    assert [op.kind for op in al] == ["substitute", "substitute"]


def test_tie_break_is_deterministic():
    a, b = tuple("abab"), tuple("baba")
    assert wer_levenshtein(a, b) == wer_levenshtein(a, b)


def test_dp_matches_enumeration_oracle_small():
    for a in all_sequences("ab", 4):
        for b in all_sequences("ab", 4):
            assert edit_distance(a, b) == exhaustive_alignment_cost(a, b)


@settings(max_examples=300)
@given(words, words.filter(bool))
def test_alignment_replay_and_counts(hyp, ref):
    bd, al = wer_levenshtein(hyp, ref)
    assert replay(al, hyp) == tuple(ref)
    kinds = [op.kind for op in al]
    assert kinds.count("substitute") == bd.substitutions
    assert kinds.count("delete") == bd.deletions
    assert kinds.count("insert") == bd.insertions
    assert bd.errors == edit_distance(hyp, ref)
    assert bd.substitutions + bd.deletions <= len(ref)
    assert bd.insertions <= len(hyp)
    assert bd.errors <= max(len(hyp), len(ref))


@settings(max_examples=300)
@given(words, words.filter(bool))
def test_levenshtein_never_exceeds_positional(hyp, ref):
    assert wer_levenshtein(hyp, ref)[0].wer <= wer_positional(hyp, ref).wer


def test_metric_axioms_length3():
    seqs = all_sequences("abc", 3)
    d = {(a, b): edit_distance(a, b) for a in seqs for b in seqs}
    for a, b in itertools.product(seqs, repeat=2):
        assert d[a, b] == d[b, a]
        assert (d[a, b] == 0) == (a == b)
    rnd = random.Random(3)
    for _ in range(20000):
        a, b, c = rnd.choice(seqs), rnd.choice(seqs), rnd.choice(seqs)
        assert d[a, c] <= d[a, b] + d[b, c]


def test_replay_rejects_wrong_hypothesis():
    _, al = wer_levenshtein(("a", "b"), ("a", "c"))
    with pytest.raises(ValueError):
        replay(al, ("z", "b"))


def test_corpus_identical_pairs():
    pairs = [(("a", "b"), ("a", "b"))] * 2
    assert corpus_wer(pairs, aggregation="pooled") == 0.0
    assert corpus_wer(pairs, aggregation="mean") == 0.0


def test_corpus_pooled_vs_mean():
    # 1 error over 5 ref words (0.2) and 1 error over 2 ref words (0.5)
    pairs = [(tuple("abcdx"), tuple("abcde")), (("a", "x"), ("a", "b"))]
    s = corpus_summary(pairs)
    assert s.pooled == pytest.approx(2 / 7)
    assert s.mean == pytest.approx(0.35)
    assert corpus_wer(pairs) == pytest.approx(0.2857, abs=1e-4)


def test_corpus_single_pair_and_errors():
    pair = [(("a", "x", "c"), ("a", "b", "c"))]
    s = corpus_summary(pair, mode="positional")
    assert s.pooled == s.mean == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        corpus_wer([])
    with pytest.raises(ValueError):
        corpus_wer(pair, aggregation="median")


@given(st.lists(st.tuples(words, words.filter(bool)), min_size=1, max_size=6), st.randoms())
def test_corpus_order_independent(pairs, rnd):
    shuffled = pairs[:]
    rnd.shuffle(shuffled)
    a, b = corpus_summary(pairs), corpus_summary(shuffled)
    assert a.pooled == b.pooled
    assert a.mean == pytest.approx(b.mean)
