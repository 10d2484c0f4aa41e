import json
import random

import pytest

from teleclass.errors import TaxonomyError
from teleclass.taxonomy import LabelPath, load_taxonomy


def tax(nodes, edges):
    return load_taxonomy(
        json.dumps(
            {
                "nodes": [{"id": i, "name": n} for i, n in enumerate(nodes)],
                "edges": edges,
            }
        )
    )


def test_chain_levels():
    t = tax(["root", "A", "B"], [[0, 1], [1, 2]])
    assert not t.synthetic_root
    assert t.root == 0
    assert {t.names[c]: sorted(l) for c, l in t.levels.items()} == {
        "root": [0],
        "A": [1],
        "B": [2],
    }


def test_cycle_reported_with_names():
    with pytest.raises(TaxonomyError, match="cycle"):
        tax(["root", "A", "B"], [[0, 1], [1, 2], [2, 1]])


def test_diamond_parents_and_levels(diamond):
    c = diamond.id_of("C")
    assert {diamond.names[p] for p in diamond.parents[c]} == {"A", "B"}
    assert diamond.levels[c] == frozenset({2})


def test_errors_on_bad_files():
    with pytest.raises(TaxonomyError, match="empty node set"):
        load_taxonomy(json.dumps({"nodes": [], "edges": []}))
    with pytest.raises(TaxonomyError, match="duplicate class name"):
        tax(["root", "A", "A"], [[0, 1], [0, 2]])
    with pytest.raises(TaxonomyError, match="unknown class id"):
        tax(["root", "A"], [[0, 7]])
    with pytest.raises(TaxonomyError, match="dense"):
        load_taxonomy(
            json.dumps({"nodes": [{"id": 0, "name": "a"}, {"id": 5, "name": "b"}], "edges": []})
        )


def test_synthetic_root_for_forest():
    t = tax(["A", "B"], [])
    assert t.synthetic_root
    assert t.names[t.root] == "ROOT"
    assert sorted(t.names[c] for c in t.children[t.root]) == ["A", "B"]


def test_ancestors_descendants(diamond):
    a, b, c = (diamond.id_of(n) for n in "ABC")
    assert diamond.ancestors(c) == {a, b}
    assert diamond.ancestors(a) == set()
    assert diamond.descendants(diamond.root) == {a, b, c}
    assert diamond.descendants(a) == {c}
    assert diamond.descendants(c) == set()


def test_chain_ancestors_exclude_self_and_root():
    t = tax(["root", "A", "B", "C"], [[0, 1], [1, 2], [2, 3]])
    assert {t.names[x] for x in t.ancestors(t.id_of("C"))} == {"A", "B"}


def test_siblings_literal_definition(two_family):
    a = two_family.id_of("shampoo")
    parent = two_family.id_of("hair care")
    assert two_family.siblings(a, parent) == {a, two_family.id_of("conditioner")}
    only = two_family.id_of("dog food")
    assert two_family.siblings(only, two_family.id_of("pets")) == {only}
    with pytest.raises(TaxonomyError, match="not a parent"):
        two_family.siblings(a, two_family.id_of("pets"))


def test_diamond_sibling_single(diamond):
    c, a = diamond.id_of("C"), diamond.id_of("A")
    assert diamond.siblings(c, a) == {c}


def test_label_paths(diamond, two_family):
    assert [[diamond.names[c] for c in p] for p in diamond.label_paths()] == [
        ["A", "C"],
        ["B", "C"],
    ]
    t = tax(["root", "A", "B"], [[0, 1], [1, 2]])
    assert [[t.names[c] for c in p] for p in t.label_paths()] == [["A", "B"]]
    t2 = tax(["root", "A", "B"], [[0, 1], [0, 2]])
    assert [[t2.names[c] for c in p] for p in t2.label_paths()] == [["A"], ["B"]]


def test_path_invariants(two_family):
    for path in two_family.label_paths():
        assert isinstance(path, LabelPath)
        assert not two_family.children[path.nodes[-1]]
        for parent, child in zip(path.nodes, path.nodes[1:]):
            assert child in two_family.children[parent]


def random_dag(rng: random.Random, max_nodes: int = 50, max_depth: int = 3):
    """Layered random DAG; some nodes get extra parents from the layer above."""
    n_levels = rng.randint(1, max_depth)
    layers = []
    total = 0
    for _ in range(n_levels):
        size = rng.randint(1, max(1, (max_nodes - total) // 2))
        if total + size > max_nodes:
            break
        layers.append(list(range(total, total + size)))
        total += size
    names = [f"n{i:02d}" for i in range(total)]
    edges = []
    for li in range(1, len(layers)):
        for node in layers[li]:
            parents = rng.sample(layers[li - 1], k=min(len(layers[li - 1]), rng.choice([1, 1, 1, 2])))
            for p in parents:
                edges.append([p, node])
    return names, edges, layers


def exhaustive_root_leaf_walks(t):
    """Independent DFS counting all simple root-to-leaf walks (root dropped)."""
    walks = []

    def dfs(node, prefix):
        kids = t.children[node]
        if not kids and prefix:
            walks.append(tuple(prefix))
            return
        for k in kids:
            dfs(k, prefix + [k])

    dfs(t.root, [])
    return walks


def test_path_count_matches_exhaustive_dfs_on_random_dags():
    rng = random.Random(1234)
    for _ in range(50):
        names, edges, _ = random_dag(rng)
        t = tax(names, edges)
        walks = exhaustive_root_leaf_walks(t)
        assert sorted(tuple(p.nodes) for p in t.label_paths()) == sorted(walks)


def test_traversal_properties_on_random_dags():
    rng = random.Random(99)
    for _ in range(50):
        names, edges, _ = random_dag(rng)
        t = tax(names, edges)
        for c in t.class_ids():
            assert t.ancestors(c) & t.descendants(c) == set()
            for p in t.parents[c]:
                if p != t.root:
                    assert c in t.descendants(p)


def test_round_trip():
    rng = random.Random(7)
    for _ in range(20):
        names, edges, _ = random_dag(rng)
        t = tax(names, edges)
        t2 = load_taxonomy(t.to_json())
        assert t2.names == t.names
        assert t2.children == t.children
        assert t2.parents == t.parents
        assert t2.levels == t.levels
        assert t2.root == t.root


def test_every_class_appears_in_some_label_path():
    rng = random.Random(55)
    for _ in range(30):
        names, edges, _ = random_dag(rng)
        t = tax(names, edges)
        on_paths = {c for p in t.label_paths() for c in p.nodes}
        assert on_paths == set(t.class_ids())
