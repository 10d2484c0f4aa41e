"""Corpus-based class-term enrichment.

For every class and each of its parents, candidate terms are ranked by
the geometric mean of three signals: popularity (log document frequency
inside the class's assigned documents), distinctiveness (softmax of BM25
against the sibling classes' pseudo-documents), and semantic similarity
(cosine between term and class-name embeddings). The top-k per parent,
unioned with the generated terms, form the class's final term set.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from teleclass import kernels
from teleclass.annotation import InitialCoreAssignment, LlmTermSet
from teleclass.corpus import CandidateTerm, Corpus, bm25, build_occurrence_table
from teleclass.errors import CorpusError
from teleclass.taxonomy import Taxonomy
from teleclass.vectors import VectorStore, cosine

log = logging.getLogger(__name__)


@dataclass
class ClassDocSet:
    class_id: int
    doc_ids: frozenset[str]


@dataclass
class TermAffinity:
    term: str
    class_id: int
    parent_id: int
    pop: float
    dist: float
    sem: float
    affinity: float


@dataclass
class EnrichedTermSet:
    class_id: int
    corpus_terms_by_parent: dict[int, list[str]] = field(default_factory=dict)
    llm_terms: set[str] = field(default_factory=set)
    merged: set[str] = field(default_factory=set)


def collect_class_documents(
    assignments: list[InitialCoreAssignment], t: Taxonomy, c: int
) -> ClassDocSet:
    """Documents whose initial cores contain c or any descendant of c."""
    family = {c} | t.descendants(c)
    ids = frozenset(a.doc_id for a in assignments if a.core_classes & family)
    return ClassDocSet(class_id=c, doc_ids=ids)


def collect_all_class_documents(
    assignments: list[InitialCoreAssignment], t: Taxonomy
) -> dict[int, ClassDocSet]:
    """One upward pass: each document joins its core classes and their ancestors."""
    buckets: dict[int, set[str]] = {c: set() for c in t.class_ids()}
    for a in assignments:
        hit: set[int] = set()
        for c in a.core_classes:
            hit.add(c)
            hit.update(t.ancestors(c))
        for c in hit:
            buckets[c].add(a.doc_id)
    return {
        c: ClassDocSet(class_id=c, doc_ids=frozenset(ids)) for c, ids in buckets.items()
    }


def popularity(term: str, class_docs: ClassDocSet, corpus: Corpus) -> float:
    """log(1 + document frequency of the term within the class's documents)."""
    positions = set(corpus.positions_containing(term))
    members = {corpus.position(d) for d in class_docs.doc_ids}
    return math.log1p(len(positions & members))


def semantic_similarity(c: int, term: str, t: Taxonomy, store: VectorStore) -> float:
    """Cosine between the class-name embedding and the term embedding."""
    return cosine(store.name(t.names[c]), store.term(term))


def distinctiveness(
    term: str,
    c: int,
    c_p: int,
    t: Taxonomy,
    class_doc_sets: dict[int, ClassDocSet],
    corpus: Corpus,
    k1: float = 1.2,
    b: float = 0.75,
    exclude_self: bool = False,
) -> float:
    """Softmax of the term's BM25 for c over the siblings under parent c_p.

    The sibling set includes c itself unless exclude_self is set; each
    class's documents form one pseudo-document and together they are the
    BM25 collection. A collection with no tokens at all scores 0 for
    every member.
    """
    siblings = sorted(t.siblings(c, c_p))
    docs_of = {
        s: [corpus.doc(d) for d in sorted(class_doc_sets[s].doc_ids)] for s in siblings
    }
    scores: dict[int, float] = {}
    for s in siblings:
        others = [docs_of[o] for o in siblings if o != s]
        try:
            scores[s] = bm25(term, docs_of[s], others, k1=k1, b=b)
        except CorpusError:
            scores[s] = 0.0
    denom_members = [s for s in siblings if not (exclude_self and s == c)]
    denom = 1.0 + sum(math.exp(scores[s]) for s in denom_members)
    return math.exp(scores[c]) / denom


def affinity_score(pop: float, dist: float, sem: float) -> float:
    """Geometric mean of the three factors; negative cosine clamps to 0."""
    sem = max(sem, 0.0)
    prod = pop * dist * sem
    return prod ** (1.0 / 3.0) if prod > 0.0 else 0.0


def enrich_class(
    c: int,
    t: Taxonomy,
    candidates: list[CandidateTerm],
    class_doc_sets: dict[int, ClassDocSet],
    llm_terms: dict[int, LlmTermSet],
    corpus: Corpus,
    store: VectorStore,
    k: int = 20,
    k1: float = 1.2,
    b: float = 0.75,
    exclude_self: bool = False,
) -> EnrichedTermSet:
    """Rank candidate terms per parent and merge the top-k with generated terms."""
    enricher = CorpusEnricher(
        t, corpus, candidates, class_doc_sets, llm_terms, store,
        k=k, k1=k1, b=b, exclude_self=exclude_self,
    )
    return enricher.enrich_class(c)


class CorpusEnricher:
    """Batch scorer sharing term statistics across all (class, parent) pairs.

    Term occurrence counts are collected in a single corpus sweep; BM25
    matrices are computed per parent group with the numeric kernels, so
    each class only pays for its own softmax column.
    """

    def __init__(
        self,
        t: Taxonomy,
        corpus: Corpus,
        candidates: list[CandidateTerm],
        class_doc_sets: dict[int, ClassDocSet],
        llm_terms: dict[int, LlmTermSet],
        store: VectorStore,
        k: int = 20,
        k1: float = 1.2,
        b: float = 0.75,
        exclude_self: bool = False,
    ):
        self.t = t
        self.corpus = corpus
        self.class_doc_sets = class_doc_sets
        self.llm_terms = llm_terms
        self.store = store
        self.k = k
        self.k1 = k1
        self.b = b
        self.exclude_self = exclude_self
        self.warnings: list[str] = []

        self.terms = [ct.surface for ct in candidates]
        self._term_row = {term: i for i, term in enumerate(self.terms)}
        self._occurrences = build_occurrence_table(corpus, self.terms)
        self._positions = {
            c: frozenset(corpus.position(d) for d in s.doc_ids)
            for c, s in class_doc_sets.items()
        }
        self._pseudo_len = {
            c: float(sum(len(corpus.docs[p].tokens) for p in pos))
            for c, pos in self._positions.items()
        }

        vecs = []
        self._term_has_vec = np.zeros(len(self.terms), dtype=bool)
        dim = store.dim
        for i, term in enumerate(self.terms):
            v = store.maybe("term", term)
            if v is None:
                vecs.append(np.zeros(dim))
            else:
                vecs.append(v)
                self._term_has_vec[i] = True
        missing = int((~self._term_has_vec).sum())
        if missing:
            self.warnings.append(
                f"{missing} candidate term(s) lack vectors and were skipped"
            )
        self._term_matrix = np.stack(vecs) if vecs else np.zeros((0, dim))
        self._bm25_cache: dict[int, tuple[list[int], np.ndarray]] = {}

    def _tf_column(self, class_id: int) -> np.ndarray:
        pos = self._positions[class_id]
        col = np.zeros(len(self.terms))
        for i, term in enumerate(self.terms):
            occ = self._occurrences[term]
            col[i] = float(sum(cnt for p, cnt in occ.items() if p in pos))
        return col

    def _df_column(self, class_id: int) -> np.ndarray:
        pos = self._positions[class_id]
        col = np.zeros(len(self.terms))
        for i, term in enumerate(self.terms):
            occ = self._occurrences[term]
            col[i] = float(sum(1 for p in occ if p in pos))
        return col

    def _bm25_for_parent(self, parent: int) -> tuple[list[int], np.ndarray]:
        """BM25 matrix of all terms against each child of `parent`."""
        cached = self._bm25_cache.get(parent)
        if cached is not None:
            return cached
        siblings = sorted(self.t.children[parent])
        tf = np.stack([self._tf_column(s) for s in siblings], axis=1)
        dl = np.array([self._pseudo_len[s] for s in siblings])
        if dl.sum() == 0.0:
            scores = np.zeros_like(tf)
        else:
            scores = kernels.bm25_matrix(tf, dl, self.k1, self.b)
        self._bm25_cache[parent] = (siblings, scores)
        return siblings, scores

    def enrich_class(self, c: int) -> EnrichedTermSet:
        own_llm_terms = {s.lower() for s in self.llm_terms[c].terms}
        result = EnrichedTermSet(class_id=c, llm_terms=set(own_llm_terms))

        name_vec = self.store.maybe("name", self.t.names[c])
        if name_vec is None:
            self.warnings.append(
                f"class {self.t.names[c]!r} has no name vector; corpus terms skipped"
            )
            sem = None
        elif len(self.terms):
            sem = kernels.pairwise_cosine(
                self._term_matrix, name_vec.reshape(1, -1)
            )[:, 0]
        else:
            sem = np.zeros(0)

        pop = np.log1p(self._df_column(c)) if self.terms else np.zeros(0)

        for parent in self.t.parents[c]:
            ranked: list[tuple[float, str]] = []
            if sem is not None and self.terms:
                siblings, scores = self._bm25_for_parent(parent)
                col = siblings.index(c)
                exp_scores = np.exp(scores)
                denom = 1.0 + exp_scores.sum(axis=1)
                if self.exclude_self:
                    denom -= exp_scores[:, col]
                dist = exp_scores[:, col] / denom
                semc = np.maximum(sem, 0.0)
                prod = pop * dist * semc
                aff = np.where(prod > 0.0, np.cbrt(np.abs(prod)), 0.0)
                for i, term in enumerate(self.terms):
                    if not self._term_has_vec[i] or aff[i] <= 0.0:
                        continue
                    if term in own_llm_terms:
                        continue
                    ranked.append((float(aff[i]), term))
            ranked.sort(key=lambda pair: (-pair[0], pair[1]))
            top = [term for _, term in ranked[: self.k]]
            result.corpus_terms_by_parent[parent] = top
        merged = set(own_llm_terms)
        for terms in result.corpus_terms_by_parent.values():
            merged.update(terms)
        result.merged = merged
        return result

    def enrich_all(self) -> dict[int, EnrichedTermSet]:
        return {c: self.enrich_class(c) for c in self.t.class_ids()}
