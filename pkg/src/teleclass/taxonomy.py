"""Label taxonomy: a rooted DAG of named classes.

Loads the taxonomy JSON format, validates structure, and answers the
traversal queries the rest of the pipeline needs: ancestors, descendants,
siblings under a given parent, per-node depth sets, and enumeration of
all root-to-leaf label paths.

The taxonomy is immutable after load and safe for concurrent reads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from teleclass.errors import TaxonomyError

ROOT_NAME = "ROOT"


@dataclass(frozen=True)
class LabelPath:
    """Ordered class ids from a top-level class down to a leaf (root excluded)."""

    nodes: tuple[int, ...]

    def __iter__(self):
        return iter(self.nodes)

    def __len__(self):
        return len(self.nodes)


@dataclass
class Taxonomy:
    """Validated class DAG with a single (possibly synthetic) root.

    `children` and `parents` are kept sorted by class name so every
    traversal is deterministic. The root never appears in query results.
    """

    names: dict[int, str]
    children: dict[int, tuple[int, ...]]
    parents: dict[int, tuple[int, ...]]
    root: int
    levels: dict[int, frozenset[int]]
    synthetic_root: bool
    _name_to_id: dict[str, int] = field(repr=False, default_factory=dict)
    _ancestors: dict[int, frozenset[int]] = field(repr=False, default_factory=dict)
    _descendants: dict[int, frozenset[int]] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if not self._name_to_id:
            self._name_to_id = {n: c for c, n in self.names.items()}

    # -- basic queries -------------------------------------------------

    def class_ids(self) -> list[int]:
        """All target class ids (root excluded), ascending."""
        return sorted(c for c in self.names if c != self.root)

    def name(self, c: int) -> str:
        self._check(c)
        return self.names[c]

    def id_of(self, name: str) -> int:
        try:
            return self._name_to_id[name]
        except KeyError:
            raise TaxonomyError(f"unknown class name: {name!r}") from None

    def leaves(self) -> list[int]:
        return sorted(c for c in self.names if c != self.root and not self.children[c])

    def _check(self, c: int) -> None:
        if c not in self.names:
            raise TaxonomyError(f"unknown class id: {c}")

    # -- traversal -----------------------------------------------------

    def ancestors(self, c: int) -> set[int]:
        """All classes on any path from the root to c, excluding c and the root."""
        self._check(c)
        cached = self._ancestors.get(c)
        if cached is None:
            out: set[int] = set()
            stack = list(self.parents[c])
            while stack:
                p = stack.pop()
                if p == self.root or p in out:
                    continue
                out.add(p)
                stack.extend(self.parents[p])
            cached = frozenset(out)
            self._ancestors[c] = cached
        return set(cached)

    def descendants(self, c: int) -> set[int]:
        """All classes reachable below c, excluding c."""
        self._check(c)
        cached = self._descendants.get(c)
        if cached is None:
            out: set[int] = set()
            stack = list(self.children[c])
            while stack:
                d = stack.pop()
                if d in out:
                    continue
                out.add(d)
                stack.extend(self.children[d])
            cached = frozenset(out)
            self._descendants[c] = cached
        return set(cached)

    def siblings(self, c: int, parent: int) -> set[int]:
        """All children of `parent`, including c itself."""
        self._check(c)
        self._check(parent)
        if parent not in self.parents[c]:
            raise TaxonomyError(
                f"class {parent} ({self.names[parent]!r}) is not a parent of "
                f"{c} ({self.names[c]!r})"
            )
        return set(self.children[parent])

    def label_paths(self) -> list[LabelPath]:
        """Every distinct root-to-leaf walk with the root prefix dropped.

        A class with several parents appears in one path per walk. Order is
        lexicographic by class names, which falls out of the name-sorted
        child lists.
        """
        paths: list[LabelPath] = []

        def walk(node: int, prefix: tuple[int, ...]) -> None:
            kids = self.children[node]
            if not kids and prefix:
                paths.append(LabelPath(prefix))
                return
            for k in kids:
                walk(k, prefix + (k,))

        walk(self.root, ())
        return paths

    # -- serialization -------------------------------------------------

    def to_json(self) -> str:
        """Serialize back to the taxonomy file format (synthetic root dropped)."""
        ids = self.class_ids() if self.synthetic_root else sorted(self.names)
        nodes = [{"id": c, "name": self.names[c]} for c in ids]
        edges = [
            [p, c]
            for p in ids
            for c in self.children[p]
        ]
        return json.dumps({"nodes": nodes, "edges": edges}, sort_keys=True)


def _find_cycle(nodes: list[int], children: dict[int, list[int]]) -> list[int] | None:
    """Return one cycle as a node list, or None. Iterative three-color DFS."""
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {n: WHITE for n in nodes}
    parent_of: dict[int, int] = {}
    for start in nodes:
        if color[start] != WHITE:
            continue
        stack: list[tuple[int, bool]] = [(start, False)]
        while stack:
            node, done = stack.pop()
            if done:
                color[node] = BLACK
                continue
            if color[node] == BLACK:
                continue
            color[node] = GRAY
            stack.append((node, True))
            for ch in children[node]:
                if color[ch] == GRAY:
                    cyc = [ch, node]
                    cur = node
                    while cur != ch:
                        cur = parent_of[cur]
                        cyc.append(cur)
                    cyc.reverse()
                    return cyc
                if color[ch] == WHITE:
                    parent_of[ch] = node
                    stack.append((ch, False))
    return None


def load_taxonomy(source: str) -> Taxonomy:
    """Parse and validate taxonomy JSON content.

    Inserts a synthetic root when the file has several parentless nodes.
    Raises TaxonomyError naming the offending ids for cycles, duplicate
    names, dangling edges, non-dense ids, or an empty node set.
    """
    try:
        data = json.loads(source)
    except json.JSONDecodeError as e:
        raise TaxonomyError(f"taxonomy is not valid JSON: {e}") from e
    raw_nodes = data.get("nodes", [])
    raw_edges = data.get("edges", [])
    if not raw_nodes:
        raise TaxonomyError("taxonomy has an empty node set")

    names: dict[int, str] = {}
    for rec in raw_nodes:
        try:
            cid, name = int(rec["id"]), str(rec["name"])
        except (KeyError, TypeError, ValueError) as e:
            raise TaxonomyError(f"malformed node record: {rec!r}") from e
        if cid in names:
            raise TaxonomyError(f"duplicate class id: {cid}")
        if not name.strip():
            raise TaxonomyError(f"empty class name for id {cid}")
        names[cid] = name
    if sorted(names) != list(range(len(names))):
        raise TaxonomyError(
            f"class ids must be dense 0..{len(names) - 1}, got {sorted(names)[:10]}..."
        )
    seen_names: dict[str, int] = {}
    for cid, name in names.items():
        if name in seen_names:
            raise TaxonomyError(
                f"duplicate class name {name!r} for ids {seen_names[name]} and {cid}"
            )
        seen_names[name] = cid

    children: dict[int, list[int]] = {c: [] for c in names}
    parents: dict[int, list[int]] = {c: [] for c in names}
    seen_edges: set[tuple[int, int]] = set()
    for edge in raw_edges:
        try:
            p, c = int(edge[0]), int(edge[1])
        except (TypeError, ValueError, IndexError) as e:
            raise TaxonomyError(f"malformed edge record: {edge!r}") from e
        if p not in names or c not in names:
            raise TaxonomyError(f"edge [{p}, {c}] references an unknown class id")
        if (p, c) in seen_edges:
            continue
        seen_edges.add((p, c))
        children[p].append(c)
        parents[c].append(p)

    cycle = _find_cycle(sorted(names), children)
    if cycle:
        pretty = " -> ".join(names[c] for c in cycle)
        raise TaxonomyError(f"taxonomy contains a cycle: {pretty}")

    top = sorted((c for c in names if not parents[c]), key=lambda c: names[c])
    if not top:  # unreachable once acyclic, kept as a guard
        raise TaxonomyError("taxonomy has no parentless node")
    if len(top) == 1:
        root = top[0]
        synthetic = False
    else:
        root = len(names)
        if ROOT_NAME in seen_names:
            raise TaxonomyError(
                f"cannot insert synthetic root: a class is already named {ROOT_NAME!r}"
            )
        names[root] = ROOT_NAME
        children[root] = list(top)
        parents[root] = []
        for c in top:
            parents[c].append(root)
        synthetic = True

    by_name = lambda c: names[c]  # noqa: E731
    children_t = {c: tuple(sorted(set(kids), key=by_name)) for c, kids in children.items()}
    parents_t = {c: tuple(sorted(set(ps), key=by_name)) for c, ps in parents.items()}

    # Depth sets: a multi-parent class can sit at several depths.
    levels: dict[int, set[int]] = {root: {0}}
    frontier = [root]
    while frontier:
        nxt = []
        for node in frontier:
            for ch in children_t[node]:
                before = levels.setdefault(ch, set())
                added = {d + 1 for d in levels[node]} - before
                if added:
                    before.update(added)
                    nxt.append(ch)
        frontier = nxt
    unreachable = sorted(set(names) - set(levels))
    if unreachable:  # unreachable once acyclic + parent rule, kept as a guard
        raise TaxonomyError(f"classes not reachable from the root: {unreachable}")

    return Taxonomy(
        names=names,
        children=children_t,
        parents=parents_t,
        root=root,
        levels={c: frozenset(d) for c, d in levels.items()},
        synthetic_root=synthetic,
    )
