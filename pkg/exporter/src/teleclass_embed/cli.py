"""Command-line entry point.

Export:
    teleclass-embed --corpus corpus.jsonl --terms terms.txt --names names.txt \
        --generated generated.jsonl --model all-mpnet-base-v2 --out vectors.jsonl

Term and name lists can also be pulled from a pipeline key manifest:
    teleclass-embed --corpus corpus.jsonl --from-manifest key_manifest.json \
        --model hashgram:256 --out vectors.jsonl

Verify an existing export against the pipeline's requested keys:
    teleclass-embed --verify --manifest key_manifest.json --out vectors.jsonl
"""

from __future__ import annotations

import argparse
import logging
import sys

from teleclass_embed.export import ExportJob, run_export, verify_against_manifest

log = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="teleclass-embed", description=__doc__)
    parser.add_argument("--corpus", action="append", default=[], help="corpus JSONL (id/text); repeatable")
    parser.add_argument("--generated", action="append", default=[], help="generated JSONL (doc_id/text); repeatable")
    parser.add_argument("--terms", action="append", default=[], help="term list, one per line; repeatable")
    parser.add_argument("--names", action="append", default=[], help="class-name list, one per line; repeatable")
    parser.add_argument("--from-manifest", default="", help="pull term:/name: keys from a pipeline key manifest")
    parser.add_argument("--model", default="hashgram:256", help="encoder id (hashgram:<dim> or a sentence-transformers model)")
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--out", required=True, help="output vectors.jsonl path")
    parser.add_argument("--verify", action="store_true", help="check an existing export instead of encoding")
    parser.add_argument("--manifest", default="", help="key manifest for --verify")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")
    if args.verify:
        if not args.manifest:
            log.error("--verify requires --manifest")
            return 2
        missing = verify_against_manifest(args.out, args.manifest)
        if missing:
            log.error("%d key(s) missing from export, e.g. %s", len(missing), missing[:5])
            return 1
        print("verify: every requested key is exported")
        return 0
    job = ExportJob(
        corpus_paths=args.corpus,
        generated_paths=args.generated,
        term_paths=args.terms,
        name_paths=args.names,
        manifest_path=args.from_manifest,
        model_id=args.model,
        batch_size=args.batch_size,
        out_path=args.out,
    )
    try:
        stats = run_export(job)
    except ValueError as e:
        log.error("%s", e)
        return 2
    for key in stats.skipped:
        log.warning("skipped %s", key)
    print(
        f"exported {sum(stats.counts.values())} vectors "
        f"(docs={stats.counts['doc']}, terms={stats.counts['term']}, "
        f"names={stats.counts['name']}, dim={stats.dim}) -> {args.out}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
