"""Core-class refinement by embedding matching.

Each class is represented by the mean embedding of its assigned documents
that explicitly mention one of its indicative terms. Every document then
ranks the represented classes by cosine and cuts the ranking at the
largest score gap; the gap size is the assignment confidence, and only
the most confident fraction of documents survives into training.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from teleclass import kernels
from teleclass.corpus import Corpus, contains_sequence, tokenize
from teleclass.enrichment import ClassDocSet, EnrichedTermSet
from teleclass.errors import TeleclassError
from teleclass.taxonomy import Taxonomy
from teleclass.vectors import VectorStore

log = logging.getLogger(__name__)


@dataclass
class ClassRepresentation:
    class_id: int
    vector: np.ndarray
    support_count: int


@dataclass
class RefinedAssignment:
    doc_id: str
    ranked_classes: tuple[int, ...]
    cut_position: int
    core_classes: set[int]
    confidence: float


def build_class_representations(
    class_doc_sets: dict[int, ClassDocSet],
    enriched: dict[int, EnrichedTermSet],
    corpus: Corpus,
    store: VectorStore,
) -> tuple[dict[int, ClassRepresentation], list[str]]:
    """Mean document embedding over each class's keyword-confirmed documents.

    A document counts only if one of the class's merged terms occurs
    contiguously in its tokens. Classes with no such document, or whose
    mean collapses to the zero vector, are excluded and reported.
    """
    reps: dict[int, ClassRepresentation] = {}
    warnings: list[str] = []
    for c, doc_set in sorted(class_doc_sets.items()):
        term_seqs = [tokenize(w) for w in sorted(enriched[c].merged)]
        term_seqs = [s for s in term_seqs if s]
        vectors = []
        for doc_id in sorted(doc_set.doc_ids):
            doc = corpus.doc(doc_id)
            if not any(contains_sequence(doc.tokens, s) for s in term_seqs):
                continue
            vec = store.maybe("doc", doc_id)
            if vec is None:
                warnings.append(f"doc {doc_id!r} has no vector; skipped for class {c}")
                continue
            vectors.append(vec)
        if not vectors:
            warnings.append(f"class {c} has no keyword-confirmed documents; excluded")
            continue
        mean = np.mean(np.stack(vectors), axis=0)
        if not np.any(mean):
            warnings.append(f"class {c} representation collapsed to zero; excluded")
            continue
        reps[c] = ClassRepresentation(class_id=c, vector=mean, support_count=len(vectors))
    return reps, warnings


def _rank_and_cut(
    scores: np.ndarray, class_ids: list[int], names: dict[int, str]
) -> tuple[tuple[int, ...], int, float]:
    """Sort classes by score (name tie-break) and cut at the largest gap.

    Exact ties form one rank block; the cut keeps whole blocks and at
    least one class stays below the cut. Returns (ranking, m, conf);
    m == 0 signals an uncuttable all-tied ranking.
    """
    order = sorted(range(len(class_ids)), key=lambda i: (-scores[i], names[class_ids[i]]))
    ranked = tuple(class_ids[i] for i in order)
    row = scores[order].reshape(1, -1)
    ms, confs = kernels.gap_cut(row)
    return ranked, int(ms[0]), float(confs[0])


def refine_document(
    doc_id: str,
    reps: dict[int, ClassRepresentation],
    store: VectorStore,
    t: Taxonomy,
    restrict_to: set[int] | None = None,
) -> RefinedAssignment:
    """Rank represented classes against one document and cut at the best gap."""
    class_ids = sorted(reps if restrict_to is None else (set(reps) & restrict_to))
    if len(class_ids) < 2:
        raise TeleclassError(
            f"refinement needs at least 2 represented classes, have {len(class_ids)}"
        )
    dv = store.doc(doc_id)
    rep_matrix = np.stack([reps[c].vector for c in class_ids])
    scores = kernels.pairwise_cosine(dv.reshape(1, -1), rep_matrix)[0]
    ranked, m, conf = _rank_and_cut(scores, class_ids, t.names)
    if m == 0:
        raise TeleclassError(
            f"doc {doc_id!r}: all matching scores tie; no similarity gap exists"
        )
    return RefinedAssignment(
        doc_id=doc_id,
        ranked_classes=ranked,
        cut_position=m,
        core_classes=set(ranked[:m]),
        confidence=conf,
    )


def refine_corpus(
    corpus: Corpus,
    reps: dict[int, ClassRepresentation],
    store: VectorStore,
    t: Taxonomy,
    restrict_map: dict[str, set[int]] | None = None,
) -> tuple[list[RefinedAssignment], list[str]]:
    """Vectorized refinement over the whole corpus.

    Documents without vectors or without a usable similarity gap are
    dropped with a warning instead of failing the stage.
    """
    warnings: list[str] = []
    out: list[RefinedAssignment] = []
    if restrict_map is None and len(reps) >= 2:
        class_ids = sorted(reps)
        rep_matrix = np.stack([reps[c].vector for c in class_ids])
        name_rank = np.argsort(
            np.argsort([t.names[c] for c in class_ids], kind="stable")
        )
        docs, doc_matrix = [], []
        for d in corpus.docs:
            vec = store.maybe("doc", d.doc_id)
            if vec is None:
                warnings.append(f"doc {d.doc_id!r} has no vector; dropped")
                continue
            docs.append(d)
            doc_matrix.append(vec)
        if not docs:
            return [], warnings
        sims = kernels.pairwise_cosine(np.stack(doc_matrix), rep_matrix)
        n = len(docs)
        sorted_scores = np.empty_like(sims)
        orders = np.empty_like(sims, dtype=np.int64)
        for i in range(n):
            order = np.lexsort((name_rank, -sims[i]))
            orders[i] = order
            sorted_scores[i] = sims[i, order]
        ms, confs = kernels.gap_cut(sorted_scores)
        for i, d in enumerate(docs):
            m = int(ms[i])
            if m == 0:
                warnings.append(f"doc {d.doc_id!r}: no similarity gap; dropped")
                continue
            ranked = tuple(class_ids[j] for j in orders[i])
            out.append(
                RefinedAssignment(
                    doc_id=d.doc_id,
                    ranked_classes=ranked,
                    cut_position=m,
                    core_classes=set(ranked[:m]),
                    confidence=float(confs[i]),
                )
            )
        return out, warnings

    for d in corpus.docs:
        restrict = restrict_map.get(d.doc_id) if restrict_map is not None else None
        try:
            if store.maybe("doc", d.doc_id) is None:
                warnings.append(f"doc {d.doc_id!r} has no vector; dropped")
                continue
            out.append(refine_document(d.doc_id, reps, store, t, restrict_to=restrict))
        except TeleclassError as e:
            warnings.append(str(e))
    return out, warnings


def select_confident(
    assignments: list[RefinedAssignment], fraction: float
) -> list[RefinedAssignment]:
    """Keep the ceil(fraction * N) most confident assignments.

    Ties on confidence break toward the smaller doc_id so the kept set is
    reproducible.
    """
    if not 0.0 < fraction <= 1.0:
        raise TeleclassError(f"confidence fraction must be in (0, 1], got {fraction}")
    if not assignments:
        raise TeleclassError("no refined assignments to select from")
    keep = math.ceil(fraction * len(assignments))
    ranked = sorted(assignments, key=lambda a: (-a.confidence, a.doc_id))
    return ranked[:keep]
