"""Path-conditioned document generation.

One completion request per root-to-leaf label path asks for q diverse
passages, so every class — including rare ones never chosen as a core
class — becomes a positive label of at least q training documents.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from teleclass.errors import TeleclassError
from teleclass.llm import Gateway, build_generation_prompt
from teleclass.taxonomy import LabelPath, Taxonomy

log = logging.getLogger(__name__)

_NUMBERED = re.compile(r"^\s*(?:\d+[.):]|[-*•])\s+", re.MULTILINE)


@dataclass
class GeneratedDocument:
    doc_id: str
    text: str
    path: LabelPath


def path_key(path: LabelPath, t: Taxonomy) -> str:
    return "/".join(t.names[c] for c in path.nodes)


def split_passages(response: str) -> list[str]:
    """Split a generation response into passages.

    Prefers explicit list numbering ("1.", "2)", bullets); falls back to
    blank-line blocks, then to the whole response as one passage.
    """
    marks = list(_NUMBERED.finditer(response))
    if len(marks) >= 2:
        out = []
        for i, m in enumerate(marks):
            end = marks[i + 1].start() if i + 1 < len(marks) else len(response)
            body = response[m.end() : end].strip()
            if body:
                out.append(body)
        if out:
            return out
    blocks = [b.strip() for b in re.split(r"\n\s*\n", response) if b.strip()]
    if blocks:
        return blocks
    whole = response.strip()
    return [whole] if whole else []


def generate_for_path(
    path: LabelPath,
    q: int,
    gateway: Gateway,
    t: Taxonomy,
    domain_blurb: str,
    max_requery: int = 2,
) -> tuple[list[GeneratedDocument], list[str]]:
    """Exactly q generated documents for one label path.

    Surplus passages are truncated; a deficit triggers up to max_requery
    fresh completions (with a retry marker appended so the request hash
    changes), and any remaining shortfall is padded by duplicating the
    last passage, which is reported as a warning.
    """
    if q < 1:
        raise TeleclassError("generation requires q >= 1")
    warnings: list[str] = []
    key = path_key(path, t)
    passages: list[str] = []
    for round_no in range(1 + max_requery):
        req = build_generation_prompt(path, q, t, domain_blurb)
        if round_no:
            req = type(req)(
                template_id=req.template_id,
                rendered_text=req.rendered_text + f"\n(retry {round_no})",
                metadata=req.metadata,
            )
        record = gateway.complete(req)
        passages.extend(split_passages(record.response_text))
        if len(passages) >= q:
            break
    if not passages:
        raise TeleclassError(f"no parsable passages generated for path {key!r}")
    if len(passages) < q:
        warnings.append(
            f"path {key!r}: only {len(passages)} passages after retries; padding to {q}"
        )
        while len(passages) < q:
            passages.append(passages[-1])
    docs = [
        GeneratedDocument(doc_id=f"gen:{key}:{i}", text=passages[i], path=path)
        for i in range(q)
    ]
    return docs, warnings


def build_generated_set(
    t: Taxonomy, q: int, gateway: Gateway, domain_blurb: str
) -> tuple[list[GeneratedDocument], list[str]]:
    """Generate q documents for every label path.

    Per-path failures are collected as warnings and the run continues; a
    failure on every single path is surfaced as an error instead.
    """
    docs: list[GeneratedDocument] = []
    warnings: list[str] = []
    errors: list[TeleclassError] = []
    paths = t.label_paths()
    for path in paths:
        try:
            got, w = generate_for_path(path, q, gateway, t, domain_blurb)
        except TeleclassError as e:
            errors.append(e)
            warnings.append(f"path {path_key(path, t)!r} failed: {e}")
            continue
        docs.extend(got)
        warnings.extend(w)
    if paths and len(errors) == len(paths):
        raise errors[0]
    return docs, warnings
