"""Stage orchestration: dependency checking, artifacts, and manifest.

Stages write their outputs atomically into the working directory and
record input/output digests in manifest.json. A stage only runs when the
recorded digests of its prerequisites match the files on disk, so the
expensive completion stages are never silently recomputed; wall-clock
timings go to a separate sidecar file to keep the manifest reproducible.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field

from teleclass import annotation, augmentation, classifier, enrichment, refinement
from teleclass.config import PipelineConfig
from teleclass.corpus import Corpus, extract_candidate_terms, ingest
from teleclass.errors import ConfigError, StageError, TeleclassError
from teleclass.evaluation import evaluation_report, load_gold
from teleclass.llm import Gateway, HttpBackend, MockBackend
from teleclass.stopwords import load_stopwords
from teleclass.taxonomy import LabelPath, Taxonomy, load_taxonomy
from teleclass.vectors import VectorStore, load_vectors

log = logging.getLogger(__name__)

STAGE_DEPS: dict[str, tuple[str, ...]] = {
    "enrich-llm": (),
    "annotate": ("enrich-llm",),
    "enrich-corpus": ("annotate",),
    "refine": ("enrich-corpus",),
    "generate": (),
    "train": ("refine", "generate"),
    "predict": ("train",),
    "evaluate": ("predict",),
}
STAGE_ORDER = tuple(STAGE_DEPS)

STAGE_OUTPUTS: dict[str, tuple[str, ...]] = {
    "enrich-llm": ("llm_terms.json",),
    "annotate": ("initial_cores.jsonl",),
    "enrich-corpus": ("enriched_terms.json",),
    "refine": ("refined_cores.jsonl",),
    "generate": ("generated.jsonl",),
    "train": ("model.json",),
    "predict": ("predictions.jsonl",),
    "evaluate": ("report.json",),
}

_RANK_FILE_LIMIT = 20  # ranking entries kept per document in refined_cores.jsonl


@dataclass
class StageResult:
    stage: str
    status: str  # ran | skipped
    outputs: dict[str, str]
    warnings: list[str] = field(default_factory=list)
    seconds: float = 0.0


def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _atomic_write(path: str, content: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(content)
    os.replace(tmp, path)


class WorkdirLock:
    """One pipeline instance per working directory."""

    def __init__(self, workdir: str):
        self.path = os.path.join(workdir, ".lock")

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise StageError(
                "lock",
                f"working directory is locked by another run ({self.path}); "
                f"delete the lock file if that run is dead",
            ) from None
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        return self

    def __exit__(self, *exc):
        try:
            os.remove(self.path)
        except OSError:
            pass
        return False


class Pipeline:
    """Loads shared inputs lazily and runs stages in dependency order."""

    def __init__(self, cfg: PipelineConfig):
        cfg.validate()
        self.cfg = cfg
        os.makedirs(cfg.workdir, exist_ok=True)
        self.manifest_path = os.path.join(cfg.workdir, "manifest.json")
        self.timings_path = os.path.join(cfg.workdir, "timings.json")
        self.keys_path = os.path.join(cfg.workdir, "key_manifest.json")
        self._cache: dict[str, object] = {}
        self._gateway: Gateway | None = None

    # -- shared lazy inputs ------------------------------------------------

    def taxonomy(self) -> Taxonomy:
        if "taxonomy" not in self._cache:
            self._cache["taxonomy"] = load_taxonomy(self._read(self.cfg.taxonomy))
        return self._cache["taxonomy"]  # type: ignore[return-value]

    def corpus(self) -> Corpus:
        if "corpus" not in self._cache:
            self._cache["corpus"] = ingest(self._read(self.cfg.corpus))
        return self._cache["corpus"]  # type: ignore[return-value]

    def test_corpus(self) -> Corpus:
        path = self.cfg.test_corpus or self.cfg.corpus
        key = f"test_corpus:{path}"
        if key not in self._cache:
            self._cache[key] = ingest(self._read(path))
        return self._cache[key]  # type: ignore[return-value]

    def vectors(self) -> VectorStore:
        if "vectors" not in self._cache:
            self._cache["vectors"] = load_vectors(self._read(self.cfg.vectors))
        return self._cache["vectors"]  # type: ignore[return-value]

    def stopword_set(self):
        if "stopwords" not in self._cache:
            src = self._read(self.cfg.stopwords) if self.cfg.stopwords else None
            self._cache["stopwords"] = load_stopwords(src)
        return self._cache["stopwords"]

    def gateway(self) -> Gateway:
        if self._gateway is None:
            if self.cfg.backend == "mock":
                backend = MockBackend.from_files(
                    table_path=self.cfg.mock_table or None,
                    rules_path=self.cfg.mock_rules or None,
                )
            else:
                backend = HttpBackend(
                    base_url=self.cfg.backend_base_url,
                    model=self.cfg.backend_model,
                    api_key_env=self.cfg.backend_api_key_env,
                )
            self._gateway = Gateway(
                backend,
                cache_path=self.cfg.cache_path(),
                max_retries=self.cfg.backend_max_retries,
                backoff_base=self.cfg.backend_backoff,
                concurrency=self.cfg.backend_concurrency,
            )
        return self._gateway

    @staticmethod
    def _read(path: str) -> str:
        try:
            with open(path, encoding="utf-8") as fh:
                return fh.read()
        except OSError as e:
            raise StageError("input", f"cannot read {path!r}: {e}") from e

    def _out(self, name: str) -> str:
        return os.path.join(self.cfg.workdir, name)

    # -- manifest ------------------------------------------------------------

    def _load_manifest(self) -> dict:
        if os.path.exists(self.manifest_path):
            with open(self.manifest_path, encoding="utf-8") as fh:
                return json.load(fh)
        return {"stages": {}}

    def _store_manifest(self, manifest: dict) -> None:
        _atomic_write(self.manifest_path, json.dumps(manifest, sort_keys=True, indent=1) + "\n")

    def _record_timing(self, stage: str, seconds: float) -> None:
        data = {}
        if os.path.exists(self.timings_path):
            with open(self.timings_path, encoding="utf-8") as fh:
                data = json.load(fh)
        data[stage] = round(seconds, 3)
        _atomic_write(self.timings_path, json.dumps(data, sort_keys=True) + "\n")

    def _record_keys(self) -> None:
        if "vectors" not in self._cache:
            return
        store: VectorStore = self._cache["vectors"]  # type: ignore[assignment]
        existing: set[str] = set()
        if os.path.exists(self.keys_path):
            with open(self.keys_path, encoding="utf-8") as fh:
                existing = set(json.load(fh).get("keys", []))
        merged = sorted(existing | store.requested)
        _atomic_write(self.keys_path, json.dumps({"keys": merged}, indent=0) + "\n")

    def _stage_inputs(self, stage: str) -> dict[str, str]:
        """External files plus prerequisite outputs this stage reads."""
        cfg = self.cfg
        base = {"taxonomy": cfg.taxonomy}
        by_stage: dict[str, dict[str, str]] = {
            "enrich-llm": {},
            "annotate": {
                "corpus": cfg.corpus,
                "vectors": cfg.vectors,
                "llm_terms.json": self._out("llm_terms.json"),
            },
            "enrich-corpus": {
                "corpus": cfg.corpus,
                "vectors": cfg.vectors,
                "llm_terms.json": self._out("llm_terms.json"),
                "initial_cores.jsonl": self._out("initial_cores.jsonl"),
            },
            "refine": {
                "corpus": cfg.corpus,
                "vectors": cfg.vectors,
                "initial_cores.jsonl": self._out("initial_cores.jsonl"),
                "enriched_terms.json": self._out("enriched_terms.json"),
            },
            "generate": {},
            "train": {
                "vectors": cfg.vectors,
                "refined_cores.jsonl": self._out("refined_cores.jsonl"),
                "generated.jsonl": self._out("generated.jsonl"),
            },
            "predict": {
                "vectors": cfg.vectors,
                "test_corpus": cfg.test_corpus or cfg.corpus,
                "model.json": self._out("model.json"),
            },
            "evaluate": {
                "gold": cfg.gold,
                "predictions.jsonl": self._out("predictions.jsonl"),
            },
        }
        inputs = dict(base)
        inputs.update(by_stage[stage])
        return inputs

    # -- stage runner ----------------------------------------------------------

    def run_stage(self, stage: str, force: bool = False) -> StageResult:
        if stage not in STAGE_DEPS:
            raise ConfigError(f"unknown stage {stage!r}; expected one of {list(STAGE_DEPS)}")
        manifest = self._load_manifest()
        stages = manifest["stages"]

        for dep in STAGE_DEPS[stage]:
            entry = stages.get(dep)
            if entry is None or entry.get("status") != "done":
                raise StageError(stage, f"prerequisite stage {dep!r} has not run")
            if not force:
                for rel, digest in entry.get("outputs", {}).items():
                    path = self._out(rel)
                    if not os.path.exists(path) or _digest(path) != digest:
                        raise StageError(
                            stage,
                            f"output {rel!r} of prerequisite {dep!r} changed on disk; "
                            f"re-run {dep!r} or pass --force",
                        )

        inputs = self._stage_inputs(stage)
        for label, path in inputs.items():
            if not path or not os.path.exists(path):
                raise StageError(stage, f"missing input {label!r} ({path!r})")
        input_digests = {label: _digest(path) for label, path in sorted(inputs.items())}

        prev = stages.get(stage)
        if (
            prev is not None
            and not force
            and prev.get("status") == "done"
            and prev.get("inputs") == input_digests
            and all(os.path.exists(self._out(r)) for r in STAGE_OUTPUTS[stage])
            and {r: _digest(self._out(r)) for r in STAGE_OUTPUTS[stage]} == prev.get("outputs")
        ):
            log.info("stage %s: inputs unchanged, skipping", stage)
            return StageResult(stage, "skipped", dict(prev["outputs"]), list(prev.get("warnings", [])))

        log.info("stage %s: running", stage)
        started = time.monotonic()
        runner = getattr(self, "_stage_" + stage.replace("-", "_"))
        try:
            warnings = runner()
        except TeleclassError:
            raise
        except Exception as e:  # surface with the stage name attached
            raise StageError(stage, f"{type(e).__name__}: {e}") from e
        elapsed = time.monotonic() - started

        outputs = {rel: _digest(self._out(rel)) for rel in STAGE_OUTPUTS[stage]}
        stages[stage] = {
            "status": "done",
            "inputs": input_digests,
            "outputs": outputs,
            "warnings": sorted(warnings),
        }
        self._store_manifest(manifest)
        self._record_timing(stage, elapsed)
        self._record_keys()
        return StageResult(stage, "ran", outputs, sorted(warnings), elapsed)

    def run_all(self, force: bool = False) -> dict:
        with WorkdirLock(self.cfg.workdir):
            for stage in STAGE_ORDER:
                self.run_stage(stage, force=force)
        with open(self._out("report.json"), encoding="utf-8") as fh:
            return json.load(fh)

    # -- stage bodies ----------------------------------------------------------

    def _stage_enrich_llm(self) -> list[str]:
        t = self.taxonomy()
        terms, warnings = annotation.llm_enrich_all(
            t, self.gateway(), self.cfg.blurb_enrich
        )
        payload = [
            {"class_id": c, "terms": sorted(terms[c].terms)} for c in sorted(terms)
        ]
        _atomic_write(self._out("llm_terms.json"), json.dumps(payload, sort_keys=True) + "\n")
        return warnings

    def _load_llm_terms(self) -> dict[int, annotation.LlmTermSet]:
        with open(self._out("llm_terms.json"), encoding="utf-8") as fh:
            payload = json.load(fh)
        return {
            rec["class_id"]: annotation.LlmTermSet(
                class_id=rec["class_id"], terms=set(rec["terms"])
            )
            for rec in payload
        }

    def _stage_annotate(self) -> list[str]:
        t = self.taxonomy()
        assignments, warnings = annotation.annotate_corpus(
            self.corpus(),
            t,
            self._load_llm_terms(),
            self.vectors(),
            self.gateway(),
            self.cfg.blurb_annotate,
            beam_base=self.cfg.beam_base,
            per_parent=self.cfg.flag_per_parent_beam,
            token_budget=self.cfg.prompt_token_budget,
        )
        lines = [
            json.dumps(
                {
                    "doc_id": a.doc_id,
                    "candidates": sorted(a.candidates),
                    "core": sorted(a.core_classes),
                    "fallback": a.fallback_used,
                }
            )
            for a in assignments
        ]
        _atomic_write(self._out("initial_cores.jsonl"), "\n".join(lines) + "\n")
        return warnings

    def _load_initial_cores(self) -> list[annotation.InitialCoreAssignment]:
        out = []
        with open(self._out("initial_cores.jsonl"), encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    out.append(
                        annotation.InitialCoreAssignment(
                            doc_id=rec["doc_id"],
                            candidates=set(rec["candidates"]),
                            core_classes=set(rec["core"]),
                            fallback_used=rec["fallback"],
                        )
                    )
        return out

    def _stage_enrich_corpus(self) -> list[str]:
        t = self.taxonomy()
        corpus = self.corpus()
        assignments = self._load_initial_cores()
        class_doc_sets = enrichment.collect_all_class_documents(assignments, t)
        candidates = extract_candidate_terms(
            corpus,
            max_n=self.cfg.max_ngram,
            min_freq=self.cfg.min_term_freq,
            stopwords=self.stopword_set(),
        )
        enricher = enrichment.CorpusEnricher(
            t,
            corpus,
            candidates,
            class_doc_sets,
            self._load_llm_terms(),
            self.vectors(),
            k=self.cfg.k,
            k1=self.cfg.bm25_k1,
            b=self.cfg.bm25_b,
            exclude_self=self.cfg.flag_sibling_exclude_self,
        )
        enriched = enricher.enrich_all()
        payload = [
            {
                "class_id": c,
                "llm": sorted(e.llm_terms),
                "corpus": {
                    str(p): list(terms)
                    for p, terms in sorted(e.corpus_terms_by_parent.items())
                },
                "merged": sorted(e.merged),
            }
            for c, e in sorted(enriched.items())
        ]
        _atomic_write(
            self._out("enriched_terms.json"), json.dumps(payload, sort_keys=True) + "\n"
        )
        return enricher.warnings

    def _load_enriched(self) -> dict[int, enrichment.EnrichedTermSet]:
        with open(self._out("enriched_terms.json"), encoding="utf-8") as fh:
            payload = json.load(fh)
        out = {}
        for rec in payload:
            out[rec["class_id"]] = enrichment.EnrichedTermSet(
                class_id=rec["class_id"],
                corpus_terms_by_parent={
                    int(p): list(terms) for p, terms in rec["corpus"].items()
                },
                llm_terms=set(rec["llm"]),
                merged=set(rec["merged"]),
            )
        return out

    def _stage_refine(self) -> list[str]:
        t = self.taxonomy()
        corpus = self.corpus()
        assignments = self._load_initial_cores()
        class_doc_sets = enrichment.collect_all_class_documents(assignments, t)
        reps, warnings = refinement.build_class_representations(
            class_doc_sets, self._load_enriched(), corpus, self.vectors()
        )
        restrict = None
        if self.cfg.flag_candidates_only_refinement:
            restrict = {a.doc_id: set(a.candidates) for a in assignments}
        refined, more = refinement.refine_corpus(
            corpus, reps, self.vectors(), t, restrict_map=restrict
        )
        warnings.extend(more)
        lines = [
            json.dumps(
                {
                    "doc_id": a.doc_id,
                    "core": sorted(a.core_classes),
                    "confidence": a.confidence,
                    "rank": list(a.ranked_classes[:_RANK_FILE_LIMIT]),
                }
            )
            for a in refined
        ]
        _atomic_write(self._out("refined_cores.jsonl"), "\n".join(lines) + "\n")
        return warnings

    def _stage_generate(self) -> list[str]:
        t = self.taxonomy()
        docs, warnings = augmentation.build_generated_set(
            t, self.cfg.q, self.gateway(), self.cfg.blurb_generate
        )
        lines = [
            json.dumps(
                {"doc_id": d.doc_id, "text": d.text, "path": list(d.path.nodes)}
            )
            for d in docs
        ]
        _atomic_write(self._out("generated.jsonl"), "\n".join(lines) + "\n")
        return warnings

    def _stage_train(self) -> list[str]:
        t = self.taxonomy()
        store = self.vectors()
        warnings: list[str] = []

        refined: list[refinement.RefinedAssignment] = []
        with open(self._out("refined_cores.jsonl"), encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    refined.append(
                        refinement.RefinedAssignment(
                            doc_id=rec["doc_id"],
                            ranked_classes=tuple(rec["rank"]),
                            cut_position=len(rec["core"]),
                            core_classes=set(rec["core"]),
                            confidence=rec["confidence"],
                        )
                    )
        confident = refinement.select_confident(refined, self.cfg.confidence_fraction)

        core_items = []
        for a in confident:
            vec = store.maybe("doc", a.doc_id)
            if vec is None:
                warnings.append(f"doc {a.doc_id!r} has no vector; left out of training")
                continue
            targets = classifier.build_targets_core(a.core_classes, t)
            core_items.append((vec, targets))

        gen_items = []
        with open(self._out("generated.jsonl"), encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                vec = store.maybe("doc", rec["doc_id"])
                if vec is None:
                    warnings.append(
                        f"generated doc {rec['doc_id']!r} has no vector; left out of "
                        f"training (export vectors for generated.jsonl first)"
                    )
                    continue
                targets = classifier.build_targets_gen(LabelPath(tuple(rec["path"])), t)
                gen_items.append((vec, targets))

        cfg = classifier.TrainConfig(
            lr=self.cfg.lr,
            batch_size=self.cfg.batch_size,
            epochs=self.cfg.epochs,
            seed=self.cfg.seed,
            weight_decay=self.cfg.weight_decay,
        )
        model = classifier.MatchingModel.init_from_names(
            t,
            store,
            dim_h=self.cfg.dim_hidden or None,
            score_form=self.cfg.score_form,
        )
        classifier.train(model, core_items, gen_items, cfg)
        train_config = {
            "lr": cfg.lr,
            "batch_size": cfg.batch_size,
            "epochs": cfg.epochs,
            "seed": cfg.seed,
            "weight_decay": cfg.weight_decay,
            "n_core": len(core_items),
            "n_generated": len(gen_items),
        }
        _atomic_write(self._out("model.json"), model.to_json(train_config) + "\n")
        return warnings

    def _stage_predict(self) -> list[str]:
        t = self.taxonomy()
        store = self.vectors()
        warnings: list[str] = []
        with open(self._out("model.json"), encoding="utf-8") as fh:
            model = classifier.MatchingModel.from_json(fh.read())
        lines = []
        for doc in self.test_corpus().docs:
            vec = store.maybe("doc", doc.doc_id)
            if vec is None:
                warnings.append(f"doc {doc.doc_id!r} has no vector; not predicted")
                continue
            ranked, predicted = model.predict(vec, self.cfg.threshold, names=t.names)
            lines.append(
                json.dumps(
                    {
                        "doc_id": doc.doc_id,
                        "ranked": [[c, p] for c, p in ranked],
                        "predicted": sorted(predicted),
                    }
                )
            )
        _atomic_write(self._out("predictions.jsonl"), "\n".join(lines) + "\n")
        return warnings

    def _stage_evaluate(self) -> list[str]:
        t = self.taxonomy()
        if not self.cfg.gold:
            raise StageError("evaluate", "config key 'gold' is required for evaluation")
        gold = load_gold(self._read(self.cfg.gold), t)
        rankings: dict[str, list[int]] = {}
        predicted: dict[str, set[int]] = {}
        with open(self._out("predictions.jsonl"), encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    rankings[rec["doc_id"]] = [c for c, _ in rec["ranked"]]
                    predicted[rec["doc_id"]] = set(rec["predicted"])
        report = evaluation_report(gold, rankings, predicted)
        _atomic_write(self._out("report.json"), json.dumps(report, sort_keys=True) + "\n")
        return []
