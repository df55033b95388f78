"""Okapi BM25 retrieval over historical specification/script pairs."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from specpilot.errors import SpecPilotError
from specpilot.script_dsl import parse_script
from specpilot.spec_model import SpecDocument, parse_spec, serialize_spec

K1 = 1.2
B = 0.75

_WORD_RE = re.compile(r"[^\W_]+")

OUTCOME_TAGS = ("accepted", "refactored")


class DuplicateKey(SpecPilotError):
    pass


class DocNotFound(SpecPilotError, KeyError):
    pass


class CorpusError(SpecPilotError):
    pass


@dataclass(frozen=True)
class HistoricalPair:
    spec: SpecDocument
    script_text: str
    outcome_tag: str = "accepted"

    @property
    def key(self) -> str:
        return self.spec.key


def tokenize(text: str) -> list[str]:
    return [t for t in _WORD_RE.findall(text.lower()) if len(t) >= 2]


@dataclass(frozen=True)
class CorpusIndex:
    pairs: tuple[HistoricalPair, ...]  # sorted by spec key
    doc_tokens: tuple[tuple[str, ...], ...]
    term_freqs: tuple[Counter, ...]
    df: dict[str, int]
    avgdl: float

    @property
    def n(self) -> int:
        return len(self.pairs)

    def doc_position(self, doc_id: str) -> int:
        for i, p in enumerate(self.pairs):
            if p.key == doc_id:
                return i
        raise DocNotFound(doc_id)


def build_index(pairs: list[HistoricalPair]) -> CorpusIndex:
    seen: set[str] = set()
    for p in pairs:
        if p.key in seen:
            raise DuplicateKey(f"duplicate historical spec key {p.key}")
        seen.add(p.key)
    ordered = tuple(sorted(pairs, key=lambda p: p.key))
    docs = tuple(tuple(tokenize(p.spec.indexable_text())) for p in ordered)
    df: Counter = Counter()
    for toks in docs:
        df.update(set(toks))
    avgdl = sum(len(d) for d in docs) / len(docs) if docs else 0.0
    return CorpusIndex(ordered, docs, tuple(Counter(d) for d in docs), dict(df), avgdl)


def idf(index: CorpusIndex, term: str) -> float:
    df = index.df.get(term, 0)
    return math.log((index.n - df + 0.5) / (df + 0.5) + 1)


def bm25_score(index: CorpusIndex, query_tokens: list[str], doc_id: str) -> float:
    pos = index.doc_position(doc_id)
    tf = index.term_freqs[pos]
    dl = len(index.doc_tokens[pos])
    norm = K1 * (1 - B + B * dl / index.avgdl) if index.avgdl else K1
    score = 0.0
    for term in query_tokens:
        f = tf.get(term, 0)
        if f:
            score += idf(index, term) * f * (K1 + 1) / (f + norm)
    return score


def retrieve_tokens(
    index: CorpusIndex, query_tokens: list[str], k: int = 3
) -> list[tuple[HistoricalPair, float]]:
    """Top-*k* pairs by BM25 score; ties go to the smaller key, zero scores are dropped."""
    if k < 1:
        raise ValueError("k must be at least 1")
    scored = []
    for pair in index.pairs:
        s = bm25_score(index, query_tokens, pair.key)
        if s > 0:
            scored.append((pair, s))
    scored.sort(key=lambda ps: (-ps[1], ps[0].key))
    return scored[:k]


def retrieve(index: CorpusIndex, spec: SpecDocument, k: int = 3) -> list[tuple[HistoricalPair, float]]:
    return retrieve_tokens(index, tokenize(spec.indexable_text()), k)


# -- on-disk corpus ----------------------------------------------------------


def load_corpus(folder: str | Path) -> list[HistoricalPair]:
    """Read ``<KEY>.json`` + ``<KEY>.ats`` (+ optional ``<KEY>.meta``) triples."""
    folder = Path(folder)
    if not folder.is_dir():
        raise CorpusError(f"corpus folder {str(folder)!r} does not exist")
    pairs = []
    for spec_path in sorted(folder.glob("*.json")):
        script_path = spec_path.with_suffix(".ats")
        if not script_path.exists():
            raise CorpusError(f"{spec_path.name} has no matching .ats script")
        spec = parse_spec(spec_path.read_text(encoding="utf-8"))
        script_text = script_path.read_text(encoding="utf-8")
        parse_script(script_text)
        meta_path = spec_path.with_suffix(".meta")
        tag = "accepted"
        if meta_path.exists():
            tag = meta_path.read_text(encoding="utf-8").strip() or "accepted"
        if tag not in OUTCOME_TAGS:
            raise CorpusError(f"{meta_path.name}: unknown outcome tag {tag!r}")
        pairs.append(HistoricalPair(spec, script_text, tag))
    return pairs


def write_corpus(folder: str | Path, pairs: list[HistoricalPair]) -> None:
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    for pair in sorted(pairs, key=lambda p: p.key):
        (folder / f"{pair.key}.json").write_text(serialize_spec(pair.spec), encoding="utf-8")
        (folder / f"{pair.key}.ats").write_text(pair.script_text, encoding="utf-8")
        if pair.outcome_tag != "accepted":
            (folder / f"{pair.key}.meta").write_text(pair.outcome_tag + "\n", encoding="utf-8")
