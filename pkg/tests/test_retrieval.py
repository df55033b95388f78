import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_spec
from specpilot.retrieval import (
    CorpusError,
    DocNotFound,
    DuplicateKey,
    HistoricalPair,
    bm25_score,
    build_index,
    idf,
    load_corpus,
    retrieve,
    retrieve_tokens,
    tokenize,
    write_corpus,
)

SCRIPT = 'script "{key}"\nstep 1 "reset"\n  call reset_system()\n'


def pair(key, text, outcome="accepted"):
    spec = make_spec(key=key, summary="", steps=[(text, "")])
    return HistoricalPair(spec, SCRIPT.format(key=key), outcome)


def toy_index():
    return build_index(
        [
            pair("D-1", "query connection origin dest"),
            pair("D-2", "add train timetable"),
            pair("D-3", "cancel train"),
        ]
    )


def test_tokenize_lowercases_and_splits_on_punctuation():
    assert tokenize("Query_connection from HNV-BER, at 10:45!") == [
        "query", "connection", "from", "hnv", "ber", "at", "10", "45",
    ]


def test_tokenize_drops_single_characters():
    assert tokenize("a b cd 7 42") == ["cd", "42"]


def test_toy_index_statistics():
    index = toy_index()
    assert index.n == 3
    assert index.avgdl == 3
    assert index.df["train"] == 2


def test_empty_index():
    index = build_index([])
    assert index.n == 0
    assert retrieve(index, make_spec(), k=3) == []


def test_bm25_toy_values():
    index = toy_index()
    assert idf(index, "train") == pytest.approx(math.log(1.6))
    assert bm25_score(index, ["train"], "D-2") == pytest.approx(0.470, abs=1e-3)
    assert bm25_score(index, ["train"], "D-3") == pytest.approx(0.544, abs=1e-3)
    assert bm25_score(index, ["train"], "D-1") == 0.0


def test_bm25_unknown_doc():
    with pytest.raises(DocNotFound):
        bm25_score(toy_index(), ["train"], "D-9")


def test_retrieve_ranks_shorter_doc_first():
    ranked = retrieve_tokens(toy_index(), ["train"], k=2)
    assert [p.key for p, _ in ranked] == ["D-3", "D-2"]


def test_retrieve_ties_break_by_key():
    index = build_index([pair("B-2", "cancel train"), pair("B-1", "cancel train")])
    assert [p.key for p, _ in retrieve_tokens(index, ["cancel"], k=2)] == ["B-1", "B-2"]


def test_retrieve_k_must_be_positive():
    with pytest.raises(ValueError):
        retrieve_tokens(toy_index(), ["train"], k=0)


def test_duplicate_keys_rejected():
    with pytest.raises(DuplicateKey):
        build_index([pair("D-1", "x y"), pair("D-1", "y z")])


def test_retrieve_uses_spec_text():
    spec = make_spec(summary="cancel a train", steps=[("Cancel train ICE5", "status OK")])
    assert retrieve(toy_index(), spec, k=1)[0][0].key == "D-3"


def test_corpus_folder_round_trip(tmp_path):
    pairs = [pair("D-1", "query connection"), pair("D-2", "cancel train", "refactored")]
    write_corpus(tmp_path, pairs)
    assert (tmp_path / "D-2.meta").exists() and not (tmp_path / "D-1.meta").exists()
    loaded = load_corpus(tmp_path)
    assert [(p.key, p.outcome_tag) for p in loaded] == [("D-1", "accepted"), ("D-2", "refactored")]
    assert loaded[0].script_text == pairs[0].script_text


def test_corpus_missing_script(tmp_path):
    write_corpus(tmp_path, [pair("D-1", "query connection")])
    (tmp_path / "D-1.ats").unlink()
    with pytest.raises(CorpusError):
        load_corpus(tmp_path)


words = st.lists(st.sampled_from(["train", "cancel", "query", "origin", "dest", "add", "delay"]), min_size=1, max_size=6)


@settings(max_examples=100, deadline=None)
@given(docs=st.lists(words, min_size=1, max_size=6), query=words, seed=st.integers(0, 1000))
def test_bm25_properties(docs, query, seed):
    pairs = [pair(f"P-{i}", " ".join(d)) for i, d in enumerate(docs)]
    index = build_index(pairs)
    for p, d in zip(pairs, docs):
        score = bm25_score(index, query, p.key)
        assert score >= 0
        assert (score == 0) == (not set(query) & set(d))
    shuffled = list(pairs)
    random.Random(seed).shuffle(shuffled)
    assert retrieve_tokens(build_index(shuffled), query, 3) == retrieve_tokens(index, query, 3)
