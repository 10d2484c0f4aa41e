import json
import random

import pytest

from teleclass.errors import TeleclassError
from teleclass.evaluation import (
    evaluation_report,
    example_f1,
    load_gold,
    mrr,
    precision_at_k,
)


def test_example_f1_perfect_and_partial():
    gold = {"a": {1, 2}}
    assert example_f1(gold, {"a": {1, 2}}) == 1.0
    assert example_f1(gold, {"a": {1, 3}}) == pytest.approx(0.5, abs=1e-15)


def test_example_f1_empty_prediction_contributes_zero():
    gold = {"a": {1}, "b": {2}}
    assert example_f1(gold, {"a": {1}, "b": set()}) == pytest.approx(0.5, abs=1e-15)


def test_example_f1_hand_fixture_five_docs():
    gold = {
        "d1": {1, 2, 3},
        "d2": {4},
        "d3": {1, 5},
        "d4": {2, 6},
        "d5": {3},
    }
    pred = {
        "d1": {1, 2, 3},  # 2*3/6 = 1
        "d2": {4, 5},  # 2*1/3
        "d3": {5},  # 2*1/3
        "d4": {1, 7},  # 0
        "d5": {3, 1},  # 2*1/3
    }
    expected = (1 + 2 / 3 + 2 / 3 + 0 + 2 / 3) / 5
    assert example_f1(gold, pred) == pytest.approx(expected, abs=1e-12)


def test_example_f1_alignment_errors():
    with pytest.raises(TeleclassError, match="missing gold"):
        example_f1({"a": {1}}, {"a": {1}, "b": {2}})
    with pytest.raises(TeleclassError, match="missing predicted"):
        example_f1({"a": {1}, "b": {2}}, {"a": {1}})


def test_precision_at_k_basics():
    gold = {"a": {1}, "b": {2}}
    rankings = {"a": [1, 9, 8], "b": [2, 9, 8]}
    assert precision_at_k(gold, rankings, 1) == 1.0


def test_precision_at_k_min_clamp():
    gold = {"a": {1, 2}}
    assert precision_at_k(gold, {"a": [1, 9, 2]}, 3) == 1.0  # 2/min(3,2)


def test_precision_at_k_hand_fixture():
    gold = {"d1": {1}, "d2": {1, 2}, "d3": {3, 4, 5}, "d4": {9}}
    rankings = {
        "d1": [1, 2, 3],  # 1/1
        "d2": [2, 9, 1],  # k=2: {2}: 1/2
        "d3": [3, 4, 9],  # k=2: 2/2
        "d4": [1, 2, 9],  # k=2: 0
    }
    expected = (1 + 0.5 + 1 + 0) / 4
    assert precision_at_k(gold, rankings, 2) == pytest.approx(expected, abs=1e-12)


def test_precision_at_k_short_ranking_counts_misses():
    gold = {"a": {1, 2, 3}}
    assert precision_at_k(gold, {"a": [1]}, 3) == pytest.approx(1 / 3, abs=1e-15)


def test_mrr_single_and_contiguous():
    assert mrr({"a": {5}}, {"a": [9, 5, 1]}) == pytest.approx(0.5, abs=1e-15)
    assert mrr({"a": {1, 2}}, {"a": [1, 2, 3]}) == pytest.approx(0.75, abs=1e-15)


def test_mrr_hand_fixture_three_docs():
    gold = {"d1": {1, 2}, "d2": {3}, "d3": {4, 5}}
    rankings = {
        "d1": [1, 9, 2, 8, 7],  # (1 + 1/3)/2
        "d2": [9, 8, 7, 3, 1],  # 1/4
        "d3": [5, 4, 1, 2, 3],  # (1 + 1/2)/2
    }
    expected = ((1 + 1 / 3) / 2 + 1 / 4 + (1 + 1 / 2) / 2) / 3
    assert mrr(gold, rankings) == pytest.approx(expected, abs=1e-12)


def test_mrr_requires_full_ranking():
    with pytest.raises(TeleclassError, match="absent from ranking"):
        mrr({"a": {5}}, {"a": [1, 2]})


def test_metrics_bounded_and_permutation_invariant():
    rng = random.Random(44)
    ids = list(range(10))
    for _ in range(50):
        gold = {}
        rankings = {}
        pred = {}
        for d in range(6):
            doc = f"d{d}"
            gold[doc] = set(rng.sample(ids, k=rng.randint(1, 4)))
            ranking = ids[:]
            rng.shuffle(ranking)
            rankings[doc] = ranking
            pred[doc] = set(rng.sample(ids, k=rng.randint(0, 4)))
        f1 = example_f1(gold, pred)
        p1 = precision_at_k(gold, rankings, 1)
        p3 = precision_at_k(gold, rankings, 3)
        m = mrr(gold, rankings)
        for v in (f1, p1, p3, m):
            assert 0.0 <= v <= 1.0
        # consistent relabeling leaves example_f1 and mrr unchanged
        perm = ids[:]
        rng.shuffle(perm)
        remap = {old: new for old, new in zip(ids, perm)}
        gold2 = {d: {remap[c] for c in s} for d, s in gold.items()}
        pred2 = {d: {remap[c] for c in s} for d, s in pred.items()}
        rankings2 = {d: [remap[c] for c in r] for d, r in rankings.items()}
        assert example_f1(gold2, pred2) == pytest.approx(f1, abs=1e-12)
        assert mrr(gold2, rankings2) == pytest.approx(m, abs=1e-12)


def test_p_at_k_is_hit_rate_for_single_label_docs():
    # with one true label the min-clamp makes P@k the top-k hit rate,
    # so widening k can only help
    rng = random.Random(7)
    ids = list(range(8))
    for _ in range(30):
        gold = {}
        rankings = {}
        for d in range(5):
            doc = f"d{d}"
            gold[doc] = {rng.choice(ids)}
            ranking = ids[:]
            rng.shuffle(ranking)
            rankings[doc] = ranking
        values = [precision_at_k(gold, rankings, k) for k in range(1, 9)]
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))
        assert values[-1] == pytest.approx(1.0, abs=1e-12)  # full ranking always hits
        for k in range(1, 9):
            hit_rate = sum(
                1 for d in gold if next(iter(gold[d])) in rankings[d][:k]
            ) / len(gold)
            assert values[k - 1] == pytest.approx(hit_rate, abs=1e-12)


def test_metrics_match_slow_set_oracle():
    rng = random.Random(99)
    ids = list(range(12))
    gold = {}
    rankings = {}
    pred = {}
    for d in range(8):
        doc = f"d{d}"
        gold[doc] = set(rng.sample(ids, k=rng.randint(1, 5)))
        ranking = ids[:]
        rng.shuffle(ranking)
        rankings[doc] = ranking
        pred[doc] = set(rng.sample(ids, k=rng.randint(0, 5)))
    # slow oracle: laborious per-document set arithmetic
    f1_acc, p3_acc, mrr_acc = [], [], []
    for doc in gold:
        inter = [c for c in gold[doc] if c in pred[doc]]
        f1_acc.append(2 * len(inter) / (len(gold[doc]) + len(pred[doc])) if pred[doc] or gold[doc] else 0)
        top3 = rankings[doc][:3]
        hits = [c for c in gold[doc] if c in top3]
        p3_acc.append(len(hits) / min(3, len(gold[doc])))
        rr = []
        for c in gold[doc]:
            rr.append(1.0 / (rankings[doc].index(c) + 1))
        mrr_acc.append(sum(rr) / len(rr))
    assert example_f1(gold, pred) == pytest.approx(sum(f1_acc) / 8, abs=1e-12)
    assert precision_at_k(gold, rankings, 3) == pytest.approx(sum(p3_acc) / 8, abs=1e-12)
    assert mrr(gold, rankings) == pytest.approx(sum(mrr_acc) / 8, abs=1e-12)


def test_load_gold_resolves_names(two_family):
    text = "\n".join(
        [
            json.dumps({"id": "d1", "labels": ["hair care", "shampoo"]}),
            json.dumps({"id": "d2", "labels": ["dog food"]}),
        ]
    )
    gold = load_gold(text, two_family)
    assert gold["d1"] == {two_family.id_of("hair care"), two_family.id_of("shampoo")}
    with pytest.raises(Exception, match="unknown class name"):
        load_gold(json.dumps({"id": "x", "labels": ["nope"]}), two_family)


def test_evaluation_report_keys():
    gold = {"a": {1}}
    rankings = {"a": [1, 2]}
    pred = {"a": {1}}
    report = evaluation_report(gold, rankings, pred)
    assert set(report) == {"example_f1", "p_at_1", "p_at_3", "mrr", "n_docs"}
    assert report["n_docs"] == 1
