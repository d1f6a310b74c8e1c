"""Command-line interface: ``llm-rerank {evaluate,rerank,export-sft}``.

Exit codes: 0 on success, 2 for configuration, input-file and data errors,
3 when the LLM backend fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from llm_rerank.backends import BACKENDS, load_backend
from llm_rerank.config import parse_kv
from llm_rerank.dataprep import export_sft, sources_from_traces
from llm_rerank.errors import BackendError, ConfigError, RerankError
from llm_rerank.evaluation.data import format_trec_lines, load_candidates, run_from_ranking
from llm_rerank.evaluation.evaluator import EvalConfig, simple_evaluate
from llm_rerank.evaluation.metrics import DEFAULT_CUTOFFS
from llm_rerank.ranking import make_candidates
from llm_rerank.reranker import Reranker
from llm_rerank.tracing import TraceSink, read_traces, trace_scope

logger = logging.getLogger("llm_rerank")

EXIT_OK, EXIT_CONFIG, EXIT_BACKEND = 0, 2, 3


def _kv(text: str) -> dict[str, Any]:
    try:
        return parse_kv(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model_type", default="openai", choices=sorted(BACKENDS))
    p.add_argument("--model_args", type=_kv, default={}, help="k=v,... e.g. model=gpt-4o,base_url=...")
    p.add_argument("--model_fw_args", type=_kv, default={}, help="generation options, e.g. temperature=0")
    p.add_argument("--reranking_approach", default="rankgpt")
    p.add_argument("--reranking_args", type=_kv, default={}, help="e.g. window_size=20,step=10")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="llm-rerank", description="LLM-based document reranking.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    ev = sub.add_parser("evaluate", help="rerank datasets and score them against qrels")
    _add_model_flags(ev)
    ev.add_argument("--datasets", nargs="+", default=[], help="manifest names or dataset directories")
    ev.add_argument("--retriever", default="bm25")
    ev.add_argument("--topk", type=int, default=100)
    ev.add_argument("--output_dir")
    ev.add_argument("--manifest", help="JSON file mapping dataset names to candidate and qrels paths")
    ev.add_argument("--workers", type=int, default=4)
    ev.add_argument("--cutoffs", type=int, nargs="+", default=list(DEFAULT_CUTOFFS))
    ev.add_argument("--map_threshold", type=int, default=1)
    ev.add_argument("--gain", choices=["linear", "exponential"], default="linear")
    ev.add_argument("--run_tag")
    ev.add_argument("--resume", action="store_true", help="skip queries already in the output run file")
    ev.add_argument("--capture_prompts", action="store_true", help="store rendered prompts in the traces")

    rr = sub.add_parser("rerank", help="rerank one query's candidates")
    _add_model_flags(rr)
    rr.add_argument("--query", required=True)
    rr.add_argument("--query_id", default="query")
    src = rr.add_mutually_exclusive_group(required=True)
    src.add_argument("--candidates", help="JSON list of documents, or a candidates JSONL file")
    src.add_argument("--doc", action="append", help="inline document text (ids doc0, doc1, ...)")
    rr.add_argument("--topk", type=int)
    rr.add_argument("--trec", action="store_true", help="print TREC run lines instead of doc ids")
    rr.add_argument("--run_tag", default="llm_rerank")
    rr.add_argument("--traces", help="write the call traces to this JSONL file")

    sf = sub.add_parser("export-sft", help="turn captured listwise traces into SFT conversations")
    sf.add_argument("--traces", required=True)
    sf.add_argument("--output", required=True)
    sf.add_argument("--skip_repaired", action="store_true", help="drop calls whose output needed repair")
    return parser


def _read_candidate_file(path: str, query_id: str, topk: int | None) -> list[Any]:
    text = Path(path).read_text(encoding="utf-8")
    try:
        docs = json.loads(text)
    except json.JSONDecodeError:
        queries = load_candidates(path, topk)
        if query_id in queries:
            return queries[query_id].candidates
        if len(queries) == 1:
            return next(iter(queries.values())).candidates
        raise ConfigError(f"{path} holds several queries; pick one with --query_id") from None
    if isinstance(docs, dict) and "candidates" in docs:
        docs = docs["candidates"]
    if not isinstance(docs, list):
        raise ConfigError(f"{path}: expected a JSON list of documents")
    return docs[:topk] if topk else docs


def cmd_rerank(args: argparse.Namespace) -> int:
    if args.topk is not None and args.topk < 1:
        raise ConfigError(f"topk must be >= 1, got {args.topk}")
    docs = args.doc if args.doc else _read_candidate_file(args.candidates, args.query_id, args.topk)
    if args.doc and args.topk:
        docs = docs[: args.topk]
    candidates = make_candidates(docs)
    backend = load_backend(args.model_type, args.model_args)
    reranker = Reranker(
        args.reranking_approach,
        model_fw_args=args.model_fw_args,
        reranking_args=args.reranking_args,
        backend=backend,
    )
    sink = TraceSink()
    with trace_scope(sink=sink):
        ranking = reranker.rank(args.query, candidates, query_id=args.query_id)
    if args.trec:
        entries = run_from_ranking(ranking, candidates)
        sys.stdout.write(format_trec_lines(args.query_id, entries, args.run_tag))
    else:
        for doc_id in ranking.doc_ids(candidates):
            print(doc_id)
    if args.traces:
        sink.write_jsonl(args.traces)
    logger.info("%d backend calls", len(sink))
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = EvalConfig(
        model_type=args.model_type,
        model_args=args.model_args,
        model_fw_args=args.model_fw_args,
        reranking_approach=args.reranking_approach,
        reranking_args=args.reranking_args,
        datasets=args.datasets,
        retriever=args.retriever,
        topk=args.topk,
        output_dir=args.output_dir,
        manifest=args.manifest,
        workers=args.workers,
        cutoffs=args.cutoffs,
        map_threshold=args.map_threshold,
        gain=args.gain,
        run_tag=args.run_tag,
        resume=args.resume,
        capture_prompts=args.capture_prompts,
    )
    report = simple_evaluate(config)
    json.dump({"metrics": report["metrics"]}, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def cmd_export_sft(args: argparse.Namespace) -> int:
    sources = sources_from_traces(read_traces(args.traces), skip_repaired=args.skip_repaired)
    count = export_sft(sources, args.output)
    print(f"wrote {count} samples to {args.output}")
    return EXIT_OK


COMMANDS = {"evaluate": cmd_evaluate, "rerank": cmd_rerank, "export-sft": cmd_export_sft}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except BackendError as e:
        print(f"error: backend failure: {e}", file=sys.stderr)
        return EXIT_BACKEND
    except (RerankError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
