"""Prompt construction, completion backends, response cache, and parsers.

Three prompt families exist: class-term enrichment, document annotation,
and path-conditioned document generation. Completions are cached by a
content hash of the rendered prompt plus backend id, so re-runs and
reordered runs never repeat a call. The mock backend makes the whole
pipeline deterministic and offline-testable.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import requests

from teleclass.corpus import Document, contains_sequence, tokenize
from teleclass.errors import (
    ConfigError,
    ParseError,
    RateLimitError,
    TransportError,
)
from teleclass.taxonomy import LabelPath, Taxonomy

log = logging.getLogger(__name__)

TEMPLATE_ENRICH = "enrich"
TEMPLATE_ANNOTATE = "annotate"
TEMPLATE_GENERATE = "generate"


@dataclass(frozen=True)
class PromptRequest:
    template_id: str
    rendered_text: str
    metadata: dict


@dataclass(frozen=True)
class CompletionRecord:
    request_hash: str
    response_text: str
    backend: str
    timestamp: float


def request_hash(rendered_text: str, backend_id: str) -> str:
    h = hashlib.sha256()
    h.update(rendered_text.encode("utf-8"))
    h.update(b"\x00")
    h.update(backend_id.encode("utf-8"))
    return h.hexdigest()


# -- prompt builders ---------------------------------------------------------


def build_enrichment_prompts(
    t: Taxonomy, c: int, domain_blurb: str
) -> list[PromptRequest]:
    """One term-generation prompt per (class, parent) pair.

    Siblings are the parent's other children; with none, the sibling
    clause renders "none".
    """
    if c == t.root:
        raise ValueError("cannot build an enrichment prompt for the root")
    out = []
    target = t.names[c]
    for parent in t.parents[c]:
        siblings = sorted(t.names[s] for s in t.siblings(c, parent) if s != c)
        sibling_clause = ", ".join(siblings) if siblings else "none"
        text = (
            f"{target} is a {domain_blurb} and is the subclass of {t.names[parent]}. "
            f"Please generate 10 additional key terms about the {target} that are "
            f"relevant to {target} but irrelevant to {sibling_clause}. "
            f"Please split the additional key terms using commas."
        )
        out.append(
            PromptRequest(
                template_id=TEMPLATE_ENRICH,
                rendered_text=text,
                metadata={
                    "class_id": c,
                    "class_name": target,
                    "parent_id": parent,
                    "parent_name": t.names[parent],
                    "siblings": siblings,
                },
            )
        )
    return out


def build_annotation_prompt(
    doc: Document,
    candidates: list[int],
    t: Taxonomy,
    domain_blurb: str,
    token_budget: int = 400,
) -> PromptRequest:
    """Class-selection prompt listing candidate names plus the document text.

    The document is truncated at a whitespace-token boundary when it
    exceeds the budget; the truncation is recorded in the metadata.
    """
    if not candidates:
        raise ValueError("annotation prompt requires a non-empty candidate list")
    names = sorted(t.names[c] for c in candidates)
    words = doc.text.split()
    truncated = len(words) > token_budget
    body = " ".join(words[:token_budget]) if truncated else doc.text
    text = (
        f"You will be provided with {domain_blurb}, and please select its types "
        f"from the following categories: {', '.join(names)}. "
        f"Just give the category names as shown in the provided list.\n\n"
        f"Query: {body}"
    )
    return PromptRequest(
        template_id=TEMPLATE_ANNOTATE,
        rendered_text=text,
        metadata={
            "doc_id": doc.doc_id,
            "candidates": names,
            "candidate_ids": sorted(candidates),
            "truncated": truncated,
        },
    )


def build_generation_prompt(
    path: LabelPath, q: int, t: Taxonomy, domain_blurb: str
) -> PromptRequest:
    """Prompt for q ~100-word passages themed on a taxonomy path's leaf."""
    if q < 1:
        raise ValueError("generation prompt requires q >= 1")
    names = [t.names[c] for c in path.nodes]
    rendered_path = " -> ".join(names)
    leaf = names[-1]
    text = (
        f"Suppose you are {domain_blurb}, please generate {q} various and reliable "
        f"passages following the requirements below:\n"
        f"1. Must generate passages following the themes of the taxonomy path: "
        f"{rendered_path}.\n"
        f"2. Must be in length about 100 words.\n"
        f"3. The writing style and format of the text should fit your role.\n"
        f"4. Should keep the generated text to be diverse, specific, and consistent "
        f"with the given taxonomy path. You should focus on {leaf}."
    )
    return PromptRequest(
        template_id=TEMPLATE_GENERATE,
        rendered_text=text,
        metadata={
            "path_ids": list(path.nodes),
            "path_names": names,
            "leaf_name": leaf,
            "q": q,
        },
    )


# -- backends ----------------------------------------------------------------


class _TransientFailure(Exception):
    def __init__(self, message: str, rate_limited: bool = False):
        super().__init__(message)
        self.rate_limited = rate_limited


class HttpBackend:
    """OpenAI-style chat-completions backend.

    The API key is read from the environment variable named in the
    config; a missing key fails at construction, before any network call.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str,
        temperatures: dict[str, float] | None = None,
        timeout: float = 60.0,
        session: requests.Session | None = None,
    ):
        key = os.environ.get(api_key_env, "")
        if not key:
            raise ConfigError(
                f"backend API key environment variable {api_key_env!r} is not set"
            )
        self._key = key
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.temperatures = temperatures or {
            TEMPLATE_ENRICH: 0.0,
            TEMPLATE_ANNOTATE: 0.0,
            TEMPLATE_GENERATE: 1.0,
        }
        self.timeout = timeout
        self.session = session or requests.Session()
        self.backend_id = f"http:{model}"

    def complete_text(self, req: PromptRequest) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": req.rendered_text}],
            "temperature": self.temperatures.get(req.template_id, 0.0),
        }
        try:
            resp = self.session.post(
                f"{self.base_url}/chat/completions",
                json=payload,
                headers={"Authorization": f"Bearer {self._key}"},
                timeout=self.timeout,
            )
        except requests.RequestException as e:
            raise _TransientFailure(f"transport failure: {e}") from e
        if resp.status_code == 429:
            raise _TransientFailure("rate limited (HTTP 429)", rate_limited=True)
        if resp.status_code >= 500:
            raise _TransientFailure(f"server error (HTTP {resp.status_code})")
        if resp.status_code != 200:
            raise TransportError(f"backend rejected request: HTTP {resp.status_code}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError) as e:
            raise _TransientFailure(f"malformed backend response: {e}") from e


class MockBackend:
    """Deterministic completion stand-in for offline runs.

    Two layers: a table of canned responses keyed by request hash, and an
    optional rule mode that synthesizes answers from planted per-document
    labels and per-class term lists.
    """

    backend_id = "mock"

    def __init__(
        self,
        table: dict[str, str] | None = None,
        planted_labels: dict[str, list[str]] | None = None,
        planted_terms: dict[str, list[str]] | None = None,
    ):
        self.table = dict(table or {})
        self.planted_labels = planted_labels
        self.planted_terms = planted_terms
        self.calls = 0

    @classmethod
    def from_files(
        cls, table_path: str | None = None, rules_path: str | None = None
    ) -> "MockBackend":
        table: dict[str, str] = {}
        if table_path:
            with open(table_path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        table[rec["hash"]] = rec["response"]
        labels = terms = None
        if rules_path:
            with open(rules_path, encoding="utf-8") as fh:
                rules = json.load(fh)
            labels = rules.get("labels")
            terms = rules.get("terms")
        return cls(table=table, planted_labels=labels, planted_terms=terms)

    @property
    def rule_mode(self) -> bool:
        return self.planted_labels is not None or self.planted_terms is not None

    @staticmethod
    def generation_passage(path_names: list[str], index: int) -> str:
        leaf = path_names[-1]
        themes = " and ".join(path_names)
        return (
            f"Passage {index + 1} focuses on {leaf}. It discusses {themes} "
            f"in about a hundred words of plain descriptive text."
        )

    def complete_text(self, req: PromptRequest) -> str:
        self.calls += 1
        h = request_hash(req.rendered_text, self.backend_id)
        if h in self.table:
            return self.table[h]
        if not self.rule_mode:
            raise TransportError(f"mock backend has no canned response for {h[:12]}")
        if req.template_id == TEMPLATE_ENRICH:
            cname = req.metadata["class_name"]
            terms = (self.planted_terms or {}).get(cname, [])
            return ", ".join(terms) if terms else cname
        if req.template_id == TEMPLATE_ANNOTATE:
            doc_id = req.metadata["doc_id"]
            planted = {n.lower() for n in (self.planted_labels or {}).get(doc_id, [])}
            picks = [n for n in req.metadata["candidates"] if n.lower() in planted]
            return ", ".join(picks)
        if req.template_id == TEMPLATE_GENERATE:
            names = req.metadata["path_names"]
            q = req.metadata["q"]
            return "\n".join(
                f"{i + 1}. {self.generation_passage(names, i)}" for i in range(q)
            )
        raise TransportError(f"mock backend cannot answer template {req.template_id!r}")


# -- gateway -----------------------------------------------------------------


@dataclass
class _InFlight:
    event: threading.Event = field(default_factory=threading.Event)
    record: CompletionRecord | None = None
    error: Exception | None = None


class Gateway:
    """Cache-first completion dispatcher with retries and de-duplication.

    Identical concurrent requests trigger a single backend call; results
    are appended to the cache file before being returned. Retries apply
    exponential backoff and surface rate-limit exhaustion distinctly from
    transport failure.
    """

    def __init__(
        self,
        backend,
        cache_path: str | None = None,
        max_retries: int = 3,
        backoff_base: float = 0.5,
        concurrency: int = 4,
    ):
        self.backend = backend
        self.cache_path = cache_path
        self.max_retries = max(1, max_retries)
        self.backoff_base = backoff_base
        self.concurrency = max(1, concurrency)
        self._cache: dict[str, str] = {}
        self._lock = threading.Lock()
        self._inflight: dict[str, _InFlight] = {}
        if cache_path and os.path.exists(cache_path):
            with open(cache_path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        self._cache.setdefault(rec["hash"], rec["response"])

    def _call_with_retries(self, req: PromptRequest) -> str:
        last: _TransientFailure | None = None
        for attempt in range(self.max_retries):
            try:
                return self.backend.complete_text(req)
            except _TransientFailure as e:
                last = e
                if attempt + 1 < self.max_retries and self.backoff_base > 0:
                    time.sleep(self.backoff_base * (2**attempt))
        assert last is not None
        if last.rate_limited:
            raise RateLimitError(str(last), attempts=self.max_retries)
        raise TransportError(str(last), attempts=self.max_retries)

    def _persist(self, h: str, req: PromptRequest, response: str) -> None:
        if not self.cache_path:
            return
        line = json.dumps(
            {
                "hash": h,
                "template_id": req.template_id,
                "request": req.rendered_text,
                "response": response,
            }
        )
        with open(self.cache_path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    def complete(self, req: PromptRequest) -> CompletionRecord:
        h = request_hash(req.rendered_text, self.backend.backend_id)
        with self._lock:
            if h in self._cache:
                return CompletionRecord(h, self._cache[h], self.backend.backend_id, time.time())
            flight = self._inflight.get(h)
            if flight is None:
                flight = _InFlight()
                self._inflight[h] = flight
                owner = True
            else:
                owner = False
        if not owner:
            flight.event.wait()
            if flight.error is not None:
                raise flight.error
            assert flight.record is not None
            return flight.record
        try:
            response = self._call_with_retries(req)
            record = CompletionRecord(h, response, self.backend.backend_id, time.time())
            with self._lock:
                self._cache[h] = response
                self._persist(h, req, response)
            flight.record = record
            return record
        except Exception as e:
            flight.error = e
            raise
        finally:
            with self._lock:
                self._inflight.pop(h, None)
            flight.event.set()

    def complete_many(
        self, reqs: list[PromptRequest]
    ) -> list[CompletionRecord | Exception]:
        """Complete requests with bounded parallelism; exceptions kept per slot."""
        results: list[CompletionRecord | Exception] = [None] * len(reqs)  # type: ignore

        def run(i: int) -> None:
            try:
                results[i] = self.complete(reqs[i])
            except Exception as e:  # collected, not raised: callers triage per item
                results[i] = e

        if len(reqs) <= 1 or self.concurrency == 1:
            for i in range(len(reqs)):
                run(i)
        else:
            with ThreadPoolExecutor(max_workers=self.concurrency) as pool:
                list(pool.map(run, range(len(reqs))))
        return results


# -- response parsers --------------------------------------------------------

_NUMBERING = ("-", "*", "+", "•")


def _strip_item(chunk: str) -> str:
    s = chunk.strip().strip("\"'").strip()
    while s[:1] in _NUMBERING:
        s = s[1:].lstrip()
    i = 0
    while i < len(s) and s[i].isdigit():
        i += 1
    if i and i < len(s) and s[i] in ".):":
        s = s[i + 1 :].lstrip()
    return s.strip().strip("\"'").strip().lower()


def parse_term_list(response: str) -> list[str]:
    """Split a generated term list on commas/newlines into clean lowercase terms.

    Strips quotes, bullets, and list numbering; drops empties and
    duplicates (first occurrence wins). An empty outcome is a ParseError
    carrying the raw text.
    """
    terms: list[str] = []
    seen: set[str] = set()
    for line in response.splitlines():
        for chunk in line.split(","):
            term = _strip_item(chunk)
            if term and term not in seen:
                seen.add(term)
                terms.append(term)
    if not terms:
        raise ParseError("no terms could be parsed from response", raw=response)
    return terms


def parse_class_selection(
    response: str,
    candidates: list[int],
    t: Taxonomy,
    similarities: dict[int, float] | None = None,
) -> tuple[set[int], bool]:
    """Map a selection response back onto candidate class ids.

    First pass: case-insensitive exact match of cleaned response segments
    (lines and comma/semicolon items) against candidate names. If nothing
    matches exactly, fall back to whole-token containment anywhere in the
    response, which tolerates prose around the names. Non-candidate names
    are ignored (logged). An empty result falls back to the candidate
    with the highest similarity; the second element reports whether the
    fallback fired.
    """
    if not candidates:
        raise ValueError("parse_class_selection requires a non-empty candidate list")
    by_name = {t.names[c].lower(): c for c in candidates}

    segments: list[str] = []
    for line in response.splitlines():
        for chunk in line.replace(";", ",").split(","):
            seg = _strip_item(chunk)
            if seg:
                segments.append(seg)

    chosen = {by_name[seg] for seg in segments if seg in by_name}
    unknown = [seg for seg in segments if seg not in by_name]
    if unknown:
        log.debug("selection response named non-candidates: %s", unknown[:5])

    if not chosen:
        resp_tokens = tokenize(response)
        for lname, cid in by_name.items():
            seq = tokenize(lname)
            if seq and contains_sequence(resp_tokens, seq):
                chosen.add(cid)

    if chosen:
        return chosen, False
    if similarities:
        best = max(candidates, key=lambda c: (similarities.get(c, float("-inf")), -c))
    else:
        best = min(candidates, key=lambda c: t.names[c])
    log.debug("selection fell back to %s", t.names[best])
    return {best}, True
