"""Corpus ingestion, tokenization, candidate-term mining, and BM25 statistics.

Tokenization is byte-deterministic: lowercase, split on any non-alphanumeric
run, drop empties. No stemming; all term matching elsewhere in the pipeline
goes through this same tokenizer, so "mentions term t" always means the
term's token sequence occurs contiguously in the document's tokens.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from teleclass.errors import CorpusError
from teleclass.stopwords import DEFAULT_STOPWORDS

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> tuple[str, ...]:
    return tuple(_TOKEN_RE.findall(text.lower()))


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    tokens: tuple[str, ...]


@dataclass(frozen=True)
class CandidateTerm:
    surface: str
    corpus_frequency: int


def contains_sequence(tokens: Sequence[str], seq: Sequence[str]) -> bool:
    """True when seq occurs contiguously inside tokens."""
    m = len(seq)
    if m == 0 or m > len(tokens):
        return False
    first = seq[0]
    limit = len(tokens) - m + 1
    for i in range(limit):
        if tokens[i] == first and tuple(tokens[i : i + m]) == tuple(seq):
            return True
    return False


def count_occurrences(tokens: Sequence[str], seq: Sequence[str]) -> int:
    """Number of (possibly overlapping) start positions of seq in tokens."""
    m = len(seq)
    if m == 0 or m > len(tokens):
        return 0
    first = seq[0]
    target = tuple(seq)
    n = 0
    for i in range(len(tokens) - m + 1):
        if tokens[i] == first and tuple(tokens[i : i + m]) == target:
            n += 1
    return n


class Corpus:
    """Immutable document collection with a unigram inverted index.

    A lazily filled term index caches, per multi-token term, the set of
    document positions that contain it contiguously.
    """

    def __init__(self, docs: list[Document]):
        self.docs = docs
        self._pos_by_id = {d.doc_id: i for i, d in enumerate(docs)}
        self._postings: dict[str, list[int]] = {}
        for i, d in enumerate(docs):
            for tok in set(d.tokens):
                self._postings.setdefault(tok, []).append(i)
        self.term_index: dict[str, tuple[int, ...]] = {}

    def __len__(self) -> int:
        return len(self.docs)

    @property
    def avg_doc_len(self) -> float:
        if not self.docs:
            return 0.0
        return sum(len(d.tokens) for d in self.docs) / len(self.docs)

    def position(self, doc_id: str) -> int:
        try:
            return self._pos_by_id[doc_id]
        except KeyError:
            raise CorpusError(f"unknown doc_id: {doc_id!r}") from None

    def doc(self, doc_id: str) -> Document:
        return self.docs[self.position(doc_id)]

    def positions_containing(self, term: str) -> tuple[int, ...]:
        """Positions of documents containing the term's token sequence."""
        cached = self.term_index.get(term)
        if cached is not None:
            return cached
        seq = tokenize(term)
        if not seq:
            result: tuple[int, ...] = ()
        elif len(seq) == 1:
            result = tuple(self._postings.get(seq[0], ()))
        else:
            candidates = None
            for tok in seq:
                posting = self._postings.get(tok)
                if not posting:
                    candidates = []
                    break
                candidates = posting if candidates is None else sorted(
                    set(candidates) & set(posting)
                )
            result = tuple(
                i for i in (candidates or []) if contains_sequence(self.docs[i].tokens, seq)
            )
        self.term_index[term] = result
        return result


def ingest(source: str) -> Corpus:
    """Build a Corpus from JSON Lines content with id/text fields."""
    docs: list[Document] = []
    seen: set[str] = set()
    for lineno, line in enumerate(source.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            doc_id = str(rec["id"])
            text = str(rec["text"])
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise CorpusError(f"malformed corpus line {lineno}: {e}") from e
        if doc_id in seen:
            raise CorpusError(f"duplicate doc_id {doc_id!r} at line {lineno}")
        seen.add(doc_id)
        docs.append(Document(doc_id=doc_id, text=text, tokens=tokenize(text)))
    return Corpus(docs)


def extract_candidate_terms(
    corpus: Corpus,
    max_n: int = 3,
    min_freq: int = 3,
    stopwords: frozenset[str] = DEFAULT_STOPWORDS,
) -> list[CandidateTerm]:
    """All contiguous n-grams (n <= max_n) found in >= min_freq documents.

    N-grams that begin or end with a stopword are dropped. Sorted by
    document frequency descending, then lexicographic.
    """
    if max_n < 1 or min_freq < 1:
        raise CorpusError("max_n and min_freq must be >= 1")
    df: Counter[str] = Counter()
    for d in corpus.docs:
        toks = d.tokens
        grams: set[str] = set()
        for n in range(1, max_n + 1):
            for i in range(len(toks) - n + 1):
                if toks[i] in stopwords or toks[i + n - 1] in stopwords:
                    continue
                grams.add(" ".join(toks[i : i + n]))
        df.update(grams)
    out = [
        CandidateTerm(surface=t, corpus_frequency=f)
        for t, f in df.items()
        if f >= min_freq
    ]
    out.sort(key=lambda ct: (-ct.corpus_frequency, ct.surface))
    return out


def build_occurrence_table(
    corpus: Corpus, terms: Iterable[str], max_n: int = 3
) -> dict[str, dict[int, int]]:
    """Per-term occurrence counts by document position, in one corpus sweep."""
    wanted: dict[int, set[str]] = {}
    for t in terms:
        n = len(t.split(" "))
        wanted.setdefault(n, set()).add(t)
    table: dict[str, dict[int, int]] = {t: {} for ts in wanted.values() for t in ts}
    for pos, d in enumerate(corpus.docs):
        toks = d.tokens
        for n, term_set in wanted.items():
            if n > len(toks):
                continue
            local: Counter[str] = Counter()
            for i in range(len(toks) - n + 1):
                g = " ".join(toks[i : i + n])
                if g in term_set:
                    local[g] += 1
            for g, cnt in local.items():
                table[g][pos] = cnt
    return table


def document_frequency(term: str, doc_set: Iterable[Document]) -> int:
    """Number of documents whose tokens contain the term contiguously."""
    seq = tokenize(term)
    if not seq:
        return 0
    return sum(1 for d in doc_set if contains_sequence(d.tokens, seq))


def bm25(
    term: str,
    target_class_docs: Iterable[Document],
    sibling_collections: Sequence[Iterable[Document]] = (),
    k1: float = 1.2,
    b: float = 0.75,
) -> float:
    """BM25 of a term against a class's concatenated pseudo-document.

    Each document set is treated as one pseudo-document; the collection is
    the target pseudo-document plus one per sibling set. Uses the
    non-negative IDF log1p((N - n + 0.5)/(n + 0.5)) so the score is
    monotone in the term's frequency.
    """
    if k1 <= 0:
        raise CorpusError("bm25 requires k1 > 0")
    if not 0.0 <= b <= 1.0:
        raise CorpusError("bm25 requires 0 <= b <= 1")
    seq = tokenize(term)

    def pseudo(docs: Iterable[Document]) -> tuple[int, int]:
        tf = 0
        length = 0
        for d in docs:
            length += len(d.tokens)
            if seq:
                tf += count_occurrences(d.tokens, seq)
        return tf, length

    stats = [pseudo(target_class_docs)] + [pseudo(s) for s in sibling_collections]
    total_len = sum(length for _, length in stats)
    if total_len == 0:
        raise CorpusError("bm25 over an empty collection: every pseudo-document is empty")
    tf = stats[0][0]
    if tf == 0:
        return 0.0
    n_docs = len(stats)
    df = sum(1 for f, _ in stats if f > 0)
    idf = math.log1p((n_docs - df + 0.5) / (df + 0.5))
    avgdl = total_len / n_docs
    norm = k1 * (1.0 - b + b * stats[0][1] / avgdl)
    return idf * tf * (k1 + 1.0) / (tf + norm)
