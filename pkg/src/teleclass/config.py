"""Pipeline configuration: flat key=value file plus command-line overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields

from teleclass.errors import ConfigError


@dataclass
class PipelineConfig:
    # input/output paths
    taxonomy: str = ""
    corpus: str = ""
    test_corpus: str = ""  # prediction/evaluation corpus; defaults to `corpus`
    gold: str = ""
    vectors: str = ""
    workdir: str = "workdir"
    cache: str = ""  # defaults to <workdir>/llm_cache.jsonl
    stopwords: str = ""

    # enrichment and annotation
    k: int = 20
    q: int = 5
    confidence_fraction: float = 0.75
    beam_base: int = 3
    max_ngram: int = 3
    min_term_freq: int = 3
    bm25_k1: float = 1.2
    bm25_b: float = 0.75
    prompt_token_budget: int = 400

    # training
    lr: float = 5e-5
    batch_size: int = 64
    epochs: int = 20
    seed: int = 42
    weight_decay: float = 0.01
    threshold: float = 0.5
    score_form: str = "sigmoid_linear"
    dim_hidden: int = 0  # 0 keeps the embedding width

    # backend
    backend: str = "mock"
    backend_base_url: str = "https://api.openai.com/v1"
    backend_model: str = "gpt-3.5-turbo-0125"
    backend_api_key_env: str = "OPENAI_API_KEY"
    backend_max_retries: int = 3
    backend_backoff: float = 0.5
    backend_concurrency: int = 4
    mock_table: str = ""
    mock_rules: str = ""

    # prompt blurbs
    blurb_enrich: str = "class in the taxonomy"
    blurb_annotate: str = "a document"
    blurb_generate: str = "a domain expert writer"

    # behavior flags
    flag_sibling_exclude_self: bool = False
    flag_candidates_only_refinement: bool = False
    flag_per_parent_beam: bool = False

    warnings: list[str] = field(default_factory=list, repr=False)

    def cache_path(self) -> str:
        return self.cache or os.path.join(self.workdir, "llm_cache.jsonl")

    def validate(self) -> None:
        problems = []
        for name in ("taxonomy", "corpus", "vectors"):
            if not getattr(self, name):
                problems.append(f"{name} path is required")
        if self.k < 1:
            problems.append("k must be >= 1")
        if self.q < 1:
            problems.append("q must be >= 1")
        if not 0.0 < self.confidence_fraction <= 1.0:
            problems.append("confidence_fraction must be in (0, 1]")
        if self.beam_base < 1:
            problems.append("beam_base must be >= 1")
        if self.max_ngram < 1 or self.min_term_freq < 1:
            problems.append("max_ngram and min_term_freq must be >= 1")
        if self.bm25_k1 <= 0:
            problems.append("bm25_k1 must be > 0")
        if not 0.0 <= self.bm25_b <= 1.0:
            problems.append("bm25_b must be in [0, 1]")
        if self.lr <= 0:
            problems.append("lr must be > 0")
        if self.batch_size < 1:
            problems.append("batch_size must be >= 1")
        if self.epochs < 0:
            problems.append("epochs must be >= 0")
        if not 0.0 <= self.threshold <= 1.0:
            problems.append("threshold must be in [0, 1]")
        if self.score_form not in ("sigmoid_linear", "sigmoid_exp"):
            problems.append(f"unknown score_form {self.score_form!r}")
        if self.backend not in ("mock", "http"):
            problems.append(f"unknown backend {self.backend!r}")
        if self.backend_max_retries < 1:
            problems.append("backend_max_retries must be >= 1")
        if self.backend_concurrency < 1:
            problems.append("backend_concurrency must be >= 1")
        if problems:
            raise ConfigError("; ".join(problems))


_BOOL_TRUE = ("1", "true", "yes", "on")
_BOOL_FALSE = ("0", "false", "no", "off")


def _coerce(name: str, kind: type, raw: str):
    raw = raw.strip()
    if kind is bool:
        low = raw.lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"{name}: expected {kind.__name__}, got {raw!r}") from None
    return raw


def parse_config(text: str, overrides: dict[str, str] | None = None) -> PipelineConfig:
    """Parse `key = value` lines (#-comments allowed), then apply overrides."""
    kinds = {f.name: f.type for f in fields(PipelineConfig) if f.name != "warnings"}
    types = {"int": int, "float": float, "str": str, "bool": bool}
    cfg = PipelineConfig()

    def apply(name: str, raw: str, where: str) -> None:
        if name not in kinds:
            raise ConfigError(f"unknown config key {name!r} ({where})")
        kind = types[kinds[name]] if isinstance(kinds[name], str) else kinds[name]
        setattr(cfg, name, _coerce(name, kind, raw))

    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"config line {lineno} is not key = value: {line!r}")
        name, raw = stripped.split("=", 1)
        apply(name.strip(), raw, f"line {lineno}")
    for name, raw in (overrides or {}).items():
        apply(name, raw, "command line")
    return cfg


def load_config(path: str, overrides: dict[str, str] | None = None) -> PipelineConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path!r}: {e}") from e
    return parse_config(text, overrides)
