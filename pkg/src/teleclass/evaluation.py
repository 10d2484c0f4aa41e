"""Multi-label evaluation: per-example F1, precision at k, and MRR."""

from __future__ import annotations

import json
import logging

from teleclass.errors import TeleclassError
from teleclass.taxonomy import Taxonomy

log = logging.getLogger(__name__)


def load_gold(source: str, t: Taxonomy) -> dict[str, set[int]]:
    """Parse gold.jsonl, resolving label names to class ids."""
    gold: dict[str, set[int]] = {}
    for lineno, line in enumerate(source.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            doc_id = str(rec["id"])
            labels = rec["labels"]
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise TeleclassError(f"malformed gold line {lineno}: {e}") from e
        if doc_id in gold:
            raise TeleclassError(f"duplicate gold doc id {doc_id!r} at line {lineno}")
        ids = {t.id_of(str(name)) for name in labels}
        ids.discard(t.root)
        if not ids:
            raise TeleclassError(f"gold doc {doc_id!r} has no labels")
        gold[doc_id] = ids
    return gold


def _check_alignment(gold: dict[str, set[int]], provided: dict, what: str) -> None:
    extra = sorted(set(provided) - set(gold))
    if extra:
        raise TeleclassError(f"missing gold for {what} doc(s): {extra[:5]}")
    missing = sorted(set(gold) - set(provided))
    if missing:
        raise TeleclassError(f"missing {what} for gold doc(s): {missing[:5]}")


def example_f1(gold: dict[str, set[int]], predicted: dict[str, set[int]]) -> float:
    """Mean per-document Dice overlap between predicted and true label sets."""
    _check_alignment(gold, predicted, "predicted")
    if not gold:
        raise TeleclassError("no documents to evaluate")
    total = 0.0
    for doc_id, truth in gold.items():
        pred = predicted[doc_id]
        denom = len(truth) + len(pred)
        total += (2.0 * len(truth & pred) / denom) if denom else 0.0
    return total / len(gold)


def precision_at_k(
    gold: dict[str, set[int]], rankings: dict[str, list[int]], k: int
) -> float:
    """Mean over documents of |true ∩ top-k| / min(k, |true|).

    A ranking shorter than k simply contributes fewer hits.
    """
    if k < 1:
        raise TeleclassError("precision_at_k requires k >= 1")
    _check_alignment(gold, rankings, "ranking")
    if not gold:
        raise TeleclassError("no documents to evaluate")
    total = 0.0
    for doc_id, truth in gold.items():
        top = set(rankings[doc_id][:k])
        total += len(truth & top) / min(k, len(truth))
    return total / len(gold)


def mrr(gold: dict[str, set[int]], rankings: dict[str, list[int]]) -> float:
    """Mean over documents of the mean reciprocal rank of each true label."""
    _check_alignment(gold, rankings, "ranking")
    if not gold:
        raise TeleclassError("no documents to evaluate")
    total = 0.0
    for doc_id, truth in gold.items():
        rank_of = {c: i + 1 for i, c in enumerate(rankings[doc_id])}
        acc = 0.0
        for c in truth:
            if c not in rank_of:
                raise TeleclassError(
                    f"true class {c} absent from ranking of doc {doc_id!r}"
                )
            acc += 1.0 / rank_of[c]
        total += acc / len(truth)
    return total / len(gold)


def evaluation_report(
    gold: dict[str, set[int]],
    rankings: dict[str, list[int]],
    predicted: dict[str, set[int]],
) -> dict:
    return {
        "example_f1": example_f1(gold, predicted),
        "p_at_1": precision_at_k(gold, rankings, 1),
        "p_at_3": precision_at_k(gold, rankings, 3),
        "mrr": mrr(gold, rankings),
        "n_docs": len(gold),
    }
