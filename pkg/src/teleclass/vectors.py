"""File-backed vector store for document, term, and class-name embeddings.

The store is loaded once from vectors.jsonl and is immutable afterwards.
Every key carries a mandatory namespace prefix (doc:/term:/name:). Lookups
are recorded so the pipeline can emit the full key manifest it depended on.
"""

from __future__ import annotations

import json
import logging
import math
import threading

import numpy as np

from teleclass.errors import MissingVectorError, VectorStoreError

log = logging.getLogger(__name__)

NAMESPACES = ("doc", "term", "name")


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; a zero vector scores 0 with a warning."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise VectorStoreError(f"cosine dimension mismatch: {u.shape} vs {v.shape}")
    nu = math.sqrt(float(u @ u))
    nv = math.sqrt(float(v @ v))
    if nu == 0.0 or nv == 0.0:
        log.warning("cosine of a zero vector defined as 0")
        return 0.0
    return float(u @ v) / (nu * nv)


class VectorStore:
    def __init__(self, dim: int):
        self.dim = dim
        self._spaces: dict[str, dict[str, np.ndarray]] = {ns: {} for ns in NAMESPACES}
        self.requested: set[str] = set()
        self._lock = threading.Lock()

    def _record(self, namespace: str, key: str) -> None:
        with self._lock:
            self.requested.add(f"{namespace}:{key}")

    def add(self, namespace: str, key: str, values: np.ndarray) -> None:
        if namespace not in NAMESPACES:
            raise VectorStoreError(f"unknown namespace {namespace!r} for key {key!r}")
        space = self._spaces[namespace]
        if key in space:
            raise VectorStoreError(f"duplicate key {namespace}:{key}")
        vec = np.asarray(values, dtype=np.float64)
        if vec.ndim != 1 or vec.shape[0] != self.dim:
            raise VectorStoreError(
                f"dimension mismatch for {namespace}:{key}: "
                f"expected {self.dim}, got {vec.shape}"
            )
        if not np.isfinite(vec).all():
            raise VectorStoreError(f"non-finite value in vector {namespace}:{key}")
        space[key] = vec

    def get(self, namespace: str, key: str) -> np.ndarray:
        self._record(namespace, key)
        try:
            return self._spaces[namespace][key]
        except KeyError:
            raise MissingVectorError(namespace, key) from None

    def maybe(self, namespace: str, key: str) -> np.ndarray | None:
        self._record(namespace, key)
        return self._spaces[namespace].get(key)

    def has(self, namespace: str, key: str) -> bool:
        return key in self._spaces[namespace]

    def doc(self, doc_id: str) -> np.ndarray:
        return self.get("doc", doc_id)

    def term(self, term: str) -> np.ndarray:
        return self.get("term", term)

    def name(self, class_name: str) -> np.ndarray:
        return self.get("name", class_name)

    def keys(self, namespace: str) -> list[str]:
        return sorted(self._spaces[namespace])

    def matrix(self, namespace: str, keys: list[str]) -> np.ndarray:
        """Stack the given keys into a (len(keys), dim) matrix."""
        return np.stack([self.get(namespace, k) for k in keys]) if keys else np.zeros((0, self.dim))


def load_vectors(source: str) -> VectorStore:
    """Parse vectors.jsonl content into a store with a uniform dimension."""
    store: VectorStore | None = None
    for lineno, line in enumerate(source.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            key = str(rec["key"])
            values = rec["vector"]
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise VectorStoreError(f"malformed vector line {lineno}: {e}") from e
        if ":" not in key:
            raise VectorStoreError(
                f"key {key!r} at line {lineno} lacks a namespace prefix (doc:/term:/name:)"
            )
        namespace, bare = key.split(":", 1)
        vec = np.asarray(values, dtype=np.float64)
        if store is None:
            if vec.ndim != 1 or vec.shape[0] == 0:
                raise VectorStoreError(f"empty vector at line {lineno}")
            store = VectorStore(dim=int(vec.shape[0]))
        try:
            store.add(namespace, bare, vec)
        except VectorStoreError as e:
            raise VectorStoreError(f"line {lineno}: {e}") from e
    if store is None:
        raise VectorStoreError("vector file holds no records")
    return store


def save_vectors(store: VectorStore) -> str:
    """Serialize back to vectors.jsonl (keys sorted within each namespace)."""
    lines = []
    for ns in NAMESPACES:
        for key in store.keys(ns):
            vec = store._spaces[ns][key]
            lines.append(json.dumps({"key": f"{ns}:{key}", "vector": vec.tolist()}))
    return "\n".join(lines) + "\n"
