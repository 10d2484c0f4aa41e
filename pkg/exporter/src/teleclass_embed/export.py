"""Collect texts, encode them in fixed batches, and write vectors.jsonl.

Input sources map onto the three key namespaces of the vector file:
documents come from corpus-format JSONL files (id/text) and generated
JSONL files (doc_id/text), terms and names from plain one-per-line lists
or from a pipeline key manifest whose term:/name: keys are their own
texts. Every key is exported exactly once; output order is input order,
so identical inputs and model produce a byte-identical file.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

log = logging.getLogger(__name__)


@dataclass
class ExportJob:
    corpus_paths: list[str] = field(default_factory=list)
    generated_paths: list[str] = field(default_factory=list)
    term_paths: list[str] = field(default_factory=list)
    name_paths: list[str] = field(default_factory=list)
    manifest_path: str = ""
    model_id: str = "hashgram:256"
    batch_size: int = 32
    out_path: str = "vectors.jsonl"


@dataclass
class ExportStats:
    counts: dict
    dim: int
    skipped: list


def _read_lines(path: str) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return fh.read().splitlines()


def collect_items(job: ExportJob) -> list[tuple[str, str]]:
    """Ordered unique (key, text) pairs across every input source."""
    items: list[tuple[str, str]] = []
    seen: set[str] = set()

    def add(key: str, text: str) -> None:
        if key not in seen:
            seen.add(key)
            items.append((key, text))

    for path in job.corpus_paths:
        for lineno, line in enumerate(_read_lines(path), start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            try:
                add(f"doc:{rec['id']}", str(rec["text"]))
            except KeyError as e:
                raise ValueError(f"{path}:{lineno}: corpus record lacks {e}") from e
    for path in job.generated_paths:
        for lineno, line in enumerate(_read_lines(path), start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            try:
                add(f"doc:{rec['doc_id']}", str(rec["text"]))
            except KeyError as e:
                raise ValueError(f"{path}:{lineno}: generated record lacks {e}") from e
    for path in job.term_paths:
        for line in _read_lines(path):
            term = line.strip()
            if term:
                add(f"term:{term}", term)
    for path in job.name_paths:
        for line in _read_lines(path):
            name = line.strip()
            if name:
                add(f"name:{name}", name)
    if job.manifest_path:
        with open(job.manifest_path, encoding="utf-8") as fh:
            keys = json.load(fh).get("keys", [])
        for key in keys:
            namespace, _, bare = key.partition(":")
            if namespace in ("term", "name") and bare:
                add(key, bare)
    return items


def run_export(job: ExportJob) -> ExportStats:
    from teleclass_embed.encoders import get_encoder

    items = collect_items(job)
    if not items:
        raise ValueError("no inputs given; nothing to export")
    encoder = get_encoder(job.model_id, batch_size=job.batch_size)
    counts = {"doc": 0, "term": 0, "name": 0}
    skipped: list[str] = []
    dim = None
    tmp = job.out_path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as out:
        for start in range(0, len(items), job.batch_size):
            batch = items[start : start + job.batch_size]
            try:
                matrix = encoder.encode([text for _, text in batch])
            except Exception as e:  # batch failed: fall back to per-item encoding
                log.warning("batch encode failed (%s); retrying per item", e)
                rows = []
                kept = []
                for key, text in batch:
                    try:
                        rows.append(encoder.encode([text])[0])
                        kept.append((key, text))
                    except Exception as item_err:
                        skipped.append(f"{key}: {item_err}")
                batch = kept
                if not rows:
                    continue
                import numpy as np

                matrix = np.stack(rows)
            if dim is None:
                dim = int(matrix.shape[1])
            for (key, _), row in zip(batch, matrix):
                counts[key.split(":", 1)[0]] += 1
                rec = {"key": key, "vector": [float(x) for x in row]}
                out.write(json.dumps(rec) + "\n")
    os.replace(tmp, job.out_path)
    return ExportStats(counts=counts, dim=dim or 0, skipped=skipped)


def verify_against_manifest(out_path: str, manifest_path: str) -> list[str]:
    """Keys the pipeline requested that are absent from the export."""
    with open(manifest_path, encoding="utf-8") as fh:
        wanted = set(json.load(fh).get("keys", []))
    have = set()
    with open(out_path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                have.add(json.loads(line)["key"])
    return sorted(wanted - have)
