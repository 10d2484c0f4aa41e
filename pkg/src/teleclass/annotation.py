"""Initial core-class annotation.

Enrich every class with generated key terms, score class-document
similarity as the best cosine between the document and any class term,
run the widening top-down candidate search over the taxonomy, and let the
completion backend pick each document's core classes from the candidates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from teleclass import kernels
from teleclass.corpus import Corpus, Document
from teleclass.errors import MissingVectorError, ParseError, TeleclassError
from teleclass.llm import (
    Gateway,
    build_annotation_prompt,
    build_enrichment_prompts,
    parse_class_selection,
    parse_term_list,
)
from teleclass.taxonomy import Taxonomy
from teleclass.vectors import VectorStore, cosine

log = logging.getLogger(__name__)


@dataclass
class LlmTermSet:
    class_id: int
    terms: set[str]


@dataclass
class InitialCoreAssignment:
    doc_id: str
    candidates: set[int]
    core_classes: set[int]
    fallback_used: bool


def llm_enrich_all(
    t: Taxonomy, gateway: Gateway, domain_blurb: str
) -> tuple[dict[int, LlmTermSet], list[str]]:
    """Generated key terms per class: one prompt per parent, unioned.

    A class whose prompts all fail (or parse to nothing) falls back to its
    own surface name; failures are returned as warnings alongside the
    partial result.
    """
    warnings: list[str] = []
    out: dict[int, LlmTermSet] = {}
    class_ids = t.class_ids()
    prompts = []
    owners = []
    for c in class_ids:
        for req in build_enrichment_prompts(t, c, domain_blurb):
            prompts.append(req)
            owners.append(c)
    results = gateway.complete_many(prompts)
    _raise_on_total_outage(results)
    for c in class_ids:
        out[c] = LlmTermSet(class_id=c, terms={t.names[c].lower()})
    for c, req, res in zip(owners, prompts, results):
        if isinstance(res, Exception):
            warnings.append(f"enrichment failed for class {t.names[c]!r}: {res}")
            continue
        try:
            terms = parse_term_list(res.response_text)
        except ParseError as e:
            warnings.append(f"unparsable term list for class {t.names[c]!r}: {e}")
            continue
        out[c].terms.update(terms)
    return out, warnings


def _raise_on_total_outage(results: list) -> None:
    """Partial backend failures become warnings; a 100% failure rate is an error."""
    from teleclass.errors import BackendError

    if results and all(isinstance(r, BackendError) for r in results):
        raise results[0]


def class_doc_similarity(
    c: int, d: Document, terms: LlmTermSet, store: VectorStore
) -> float:
    """Best cosine between the document vector and any of the class's terms.

    Terms without vectors are skipped; if none of them has a vector the
    similarity is undefined and raises.
    """
    dv = store.doc(d.doc_id)
    best = None
    for term in sorted(terms.terms):
        tv = store.maybe("term", term)
        if tv is None:
            continue
        s = cosine(tv, dv)
        if best is None or s > best:
            best = s
    if best is None:
        raise MissingVectorError("term", f"<all {len(terms.terms)} terms of class {c}>")
    return best


def similarity_table(
    t: Taxonomy,
    terms_map: dict[int, LlmTermSet],
    store: VectorStore,
    docs: list[Document],
) -> tuple[np.ndarray, dict[int, int], list[str]]:
    """Dense class-by-document similarity matrix for the whole corpus.

    Returns (sims, row_of_class, warnings). Classes with no embeddable
    term get -inf rows and a warning; missing document vectors raise.
    """
    warnings: list[str] = []
    doc_matrix = np.stack([store.doc(d.doc_id) for d in docs])
    class_ids = t.class_ids()
    row_of = {c: i for i, c in enumerate(class_ids)}
    sims = np.full((len(class_ids), len(docs)), -np.inf)
    for c in class_ids:
        term_vecs = []
        for term in sorted(terms_map[c].terms):
            tv = store.maybe("term", term)
            if tv is not None:
                term_vecs.append(tv)
        if not term_vecs:
            warnings.append(
                f"class {t.names[c]!r}: no term vectors available; similarity undefined"
            )
            continue
        cos = kernels.pairwise_cosine(np.stack(term_vecs), doc_matrix)
        sims[row_of[c]] = cos.max(axis=0)
    return sims, row_of, warnings


def candidate_search(
    d: Document,
    t: Taxonomy,
    terms_map: dict[int, LlmTermSet] | None = None,
    store: VectorStore | None = None,
    beam_base: int = 3,
    per_parent: bool = False,
    sim_lookup=None,
) -> set[int]:
    """Top-down widening beam over the taxonomy.

    Starting from the root, pool the children of the current frontier and
    keep the l+beam_base most similar classes at depth l (ties broken by
    name); the union of everything ever kept is the candidate set. With
    per_parent=True the beam applies to each parent's children separately
    instead of the pooled frontier.
    """
    if sim_lookup is None:
        if terms_map is None or store is None:
            raise ValueError("candidate_search needs terms_map and store or sim_lookup")
        memo: dict[int, float] = {}

        def sim_lookup(c: int) -> float:
            if c not in memo:
                memo[c] = class_doc_similarity(c, d, terms_map[c], store)
            return memo[c]

    def top(pool: set[int], width: int) -> list[int]:
        ranked = sorted(pool, key=lambda c: (-sim_lookup(c), t.names[c]))
        return ranked[:width]

    selected: set[int] = set()
    frontier: list[int] = [t.root]
    level = 0
    while True:
        width = level + beam_base
        if per_parent:
            keep: set[int] = set()
            for p in frontier:
                kids = set(t.children[p])
                keep.update(top(kids, width))
        else:
            pool = {k for p in frontier for k in t.children[p]}
            if not pool:
                break
            keep = set(top(pool, width))
        if not keep:
            break
        selected.update(keep)
        frontier = sorted(keep, key=lambda c: t.names[c])
        level += 1
    selected.discard(t.root)
    return selected


def annotate_corpus(
    corpus: Corpus,
    t: Taxonomy,
    terms_map: dict[int, LlmTermSet],
    store: VectorStore,
    gateway: Gateway,
    domain_blurb: str,
    beam_base: int = 3,
    per_parent: bool = False,
    token_budget: int = 400,
) -> tuple[list[InitialCoreAssignment], list[str]]:
    """Candidate search plus backend selection for every document.

    Per-document backend failures are collected as warnings and the run
    continues; an empty or off-list selection falls back to the most
    similar candidate.
    """
    sims, row_of, warnings = similarity_table(t, terms_map, store, corpus.docs)

    assignments: list[InitialCoreAssignment] = []
    prompts = []
    doc_candidates: list[tuple[Document, list[int]]] = []
    for j, doc in enumerate(corpus.docs):
        lookup = lambda c, _j=j: float(sims[row_of[c], _j])  # noqa: E731
        cands = candidate_search(
            doc, t, beam_base=beam_base, per_parent=per_parent, sim_lookup=lookup
        )
        ordered = sorted(cands)
        doc_candidates.append((doc, ordered))
        prompts.append(
            build_annotation_prompt(doc, ordered, t, domain_blurb, token_budget)
        )
    results = gateway.complete_many(prompts)
    _raise_on_total_outage(results)
    for (doc, cands), res, j in zip(doc_candidates, results, range(len(corpus.docs))):
        if isinstance(res, Exception):
            if isinstance(res, (TeleclassError,)):
                warnings.append(f"annotation failed for doc {doc.doc_id!r}: {res}")
                continue
            raise res
        sims_for_doc = {c: float(sims[row_of[c], j]) for c in cands}
        core, fallback = parse_class_selection(
            res.response_text, cands, t, similarities=sims_for_doc
        )
        assignments.append(
            InitialCoreAssignment(
                doc_id=doc.doc_id,
                candidates=set(cands),
                core_classes=core,
                fallback_used=fallback,
            )
        )
    return assignments, warnings
