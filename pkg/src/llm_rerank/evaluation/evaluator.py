"""Batch evaluation: rerank every query of a dataset, write run, traces and report.

Run as ``python -m llm_rerank.evaluation.evaluator`` with the same flags as
``llm-rerank evaluate``.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from llm_rerank.backends import Backend, GenerationOptions, load_backend
from llm_rerank.errors import BackendError, ConfigError, SelectionSizeError
from llm_rerank.evaluation.data import (
    QueryCandidates,
    RunEntry,
    format_trec_lines,
    load_candidates,
    load_qrels,
    parse_trec_run,
    run_from_ranking,
    write_trec_run,
)
from llm_rerank.evaluation.metrics import DEFAULT_CUTOFFS, evaluate_run
from llm_rerank.ranking import Ranking, identity_rerank
from llm_rerank.reranker import Reranker, get_approach, resolve_args
from llm_rerank.tracing import TraceRecord, TraceSink, read_traces, summarize, trace_scope, write_traces

logger = logging.getLogger(__name__)

MANIFEST_ENV = "LLM_RERANK_DATASETS"
REDACTED = "***"
_SECRET_KEYS = re.compile(r"(api_?key|token|secret|password)", re.IGNORECASE)


@dataclass
class EvalConfig:
    """Everything needed to reproduce an evaluation run."""

    model_type: str = "openai"
    model_args: dict[str, Any] = field(default_factory=dict)
    model_fw_args: dict[str, Any] = field(default_factory=dict)
    reranking_approach: str = "rankgpt"
    reranking_args: dict[str, Any] = field(default_factory=dict)
    datasets: list[str] = field(default_factory=list)
    retriever: str = "bm25"
    topk: int = 100
    output_dir: str | None = None
    manifest: str | None = None
    workers: int = 4
    cutoffs: list[int] = field(default_factory=lambda: list(DEFAULT_CUTOFFS))
    map_threshold: int = 1
    gain: str = "linear"
    run_tag: str | None = None
    resume: bool = False
    capture_prompts: bool = False

    def validate(self) -> None:
        if not self.datasets:
            raise ConfigError("no datasets given")
        if self.topk < 1:
            raise ConfigError(f"topk must be >= 1, got {self.topk}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.map_threshold < 1:
            raise ConfigError(f"map_threshold must be >= 1, got {self.map_threshold}")
        if self.gain not in ("linear", "exponential"):
            raise ConfigError(f"gain must be 'linear' or 'exponential', got {self.gain!r}")
        if any(k < 1 for k in self.cutoffs):
            raise ConfigError(f"cutoffs must be >= 1, got {self.cutoffs}")
        resolve_args(self.reranking_approach, self.reranking_args)
        if self.run_tag is not None and (not self.run_tag or re.search(r"\s", self.run_tag)):
            raise ConfigError(f"run tag must be a single word, got {self.run_tag!r}")

    @property
    def tag(self) -> str:
        return self.run_tag or get_approach(self.reranking_approach).name

    def echo(self) -> dict[str, Any]:
        """Config with defaults filled in and secrets redacted."""
        out = dataclasses.asdict(self)
        out["model_args"] = {
            k: (REDACTED if _SECRET_KEYS.search(k) and v else v) for k, v in self.model_args.items()
        }
        out["reranking_approach"] = get_approach(self.reranking_approach).name
        out["reranking_args"] = resolve_args(self.reranking_approach, self.reranking_args)
        out["model_fw_args"] = dataclasses.asdict(GenerationOptions.from_args(self.model_fw_args))
        out["run_tag"] = self.tag
        return out


@dataclass
class DatasetPaths:
    name: str
    candidates: Path
    qrels: Path


def _manifest_entry(entry: Mapping[str, Any], retriever: str, base: Path, name: str) -> DatasetPaths:
    cands = entry.get("candidates")
    if isinstance(cands, Mapping):
        if retriever not in cands:
            raise ConfigError(f"dataset {name!r} has no candidates for retriever {retriever!r}")
        cands = cands[retriever]
    if not cands or "qrels" not in entry:
        raise ConfigError(f"manifest entry {name!r} needs 'candidates' and 'qrels'")
    return DatasetPaths(name, base / cands, base / entry["qrels"])


def resolve_dataset(name: str, retriever: str = "bm25", manifest: str | None = None) -> DatasetPaths:
    """Find the candidate and qrels files for a dataset.

    Names are looked up in the manifest (``manifest`` argument, else the
    ``LLM_RERANK_DATASETS`` environment variable): a JSON object mapping
    names to ``{"candidates": path or {retriever: path}, "qrels": path}``,
    paths relative to the manifest. Anything else is read as a directory
    holding ``<retriever>.jsonl`` or ``candidates.jsonl`` plus ``qrels.txt``.
    """
    manifest = manifest or os.environ.get(MANIFEST_ENV)
    if manifest:
        path = Path(manifest)
        try:
            table = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read dataset manifest {manifest}: {e}") from e
        if name in table:
            return _manifest_entry(table[name], retriever, path.parent, name)
    root = Path(name)
    if root.is_dir():
        for cand_name in (f"{retriever}.jsonl", "candidates.jsonl"):
            if (root / cand_name).is_file() and (root / "qrels.txt").is_file():
                return DatasetPaths(root.name or name, root / cand_name, root / "qrels.txt")
    raise ConfigError(
        f"unknown dataset {name!r}: not in the manifest and not a directory with candidates.jsonl and qrels.txt"
    )


def _slug(name: str) -> str:
    return re.sub(r"[^\w.-]+", "_", name).strip("_") or "dataset"


def _load_finished(run_path: Path, expected: Mapping[str, int]) -> dict[str, list[RunEntry]]:
    """Queries from a partial run file that were written completely."""
    if not run_path.exists():
        return {}
    text = run_path.read_text(encoding="utf-8")
    # drop a line cut short by an interrupted write
    text = text[: text.rfind("\n") + 1]
    run = parse_trec_run(text.splitlines(), str(run_path))
    return {q: e for q, e in run.items() if len(e) == expected.get(q, -1)}


class _DatasetJob:
    """Reranks one dataset, streaming results to disk as queries finish."""

    def __init__(self, config: EvalConfig, reranker: Reranker, paths: DatasetPaths, out_dir: Path | None):
        self.config = config
        self.reranker = reranker
        self.paths = paths
        self.out_dir = out_dir
        self.sink = TraceSink(capture_prompts=config.capture_prompts)
        self.failed: list[str] = []

    def _rank_one(self, qc: QueryCandidates) -> tuple[str, Ranking]:
        paradigm = get_approach(self.reranker.approach).paradigm.value
        with trace_scope(sink=self.sink):
            try:
                ranking = self.reranker.rank(qc.query, qc.candidates, query_id=qc.query_id)
            except (BackendError, SelectionSizeError) as e:
                logger.warning("query %s: %s; keeping the retrieval order", qc.query_id, e)
                self.sink.emit(qc.query_id, paradigm, "error", error=f"{type(e).__name__}: {e}")
                ranking = identity_rerank(qc.query, qc.candidates)
        return qc.query_id, ranking

    def run(self, queries: Mapping[str, QueryCandidates]) -> dict[str, list[RunEntry]]:
        run_path = trace_path = None
        done: dict[str, list[RunEntry]] = {}
        if self.out_dir is not None:
            run_path = self.out_dir / "run.trec"
            trace_path = self.out_dir / "traces.jsonl"
            if self.config.resume:
                done = _load_finished(run_path, {q: len(v.candidates) for q, v in queries.items()})
                if trace_path.exists():
                    self.sink.add(r for r in read_traces(trace_path) if r.query_id in done)
                if done:
                    logger.info("%s: resuming, %d queries already ranked", self.paths.name, len(done))
            write_trec_run(done, self.config.tag, run_path)
            write_traces(self.sink.records(), trace_path)

        todo = [qc for qid, qc in sorted(queries.items()) if qid not in done]
        run = dict(done)
        with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
            futures = {pool.submit(self._rank_one, qc): qc for qc in todo}
            for fut in as_completed(futures):
                qc = futures[fut]
                qid, ranking = fut.result()
                entries = run_from_ranking(ranking, qc.candidates)
                run[qid] = entries
                if run_path is not None:
                    with open(run_path, "a", encoding="utf-8") as f:
                        f.write(format_trec_lines(qid, entries, self.config.tag))
                    with open(trace_path, "a", encoding="utf-8") as f:
                        for rec in sorted(self.sink.records(qid), key=lambda r: r.call_index):
                            f.write(json.dumps(rec.to_dict(), ensure_ascii=False) + "\n")

        self.failed = sorted({r.query_id for r in self.sink.records() if r.op == "error"})
        if run_path is not None:
            write_trec_run(run, self.config.tag, run_path)
            write_traces(self.sink.records(), trace_path)
        return run


def _load_queries(paths: DatasetPaths, topk: int) -> dict[str, QueryCandidates]:
    try:
        return load_candidates(paths.candidates, topk)
    except OSError as e:
        raise ConfigError(f"cannot read candidates for {paths.name}: {e}") from e


def _dataset_report(job: _DatasetJob, run, qrels, records: Sequence[TraceRecord]) -> dict[str, Any]:
    cfg = job.config
    report = evaluate_run(run, qrels, cfg.cutoffs, cfg.map_threshold, cfg.gain)
    usage = summarize(records)
    out: dict[str, Any] = {
        "metrics": report.metrics,
        "num_queries": report.num_queries,
        "num_ranked": len(run),
        "missing_queries": report.missing_queries,
        "failed_queries": job.failed,
        "usage": usage,
        "candidates": str(job.paths.candidates),
        "qrels": str(job.paths.qrels),
    }
    if job.out_dir is not None:
        out["run_path"] = str(job.out_dir / "run.trec")
        out["traces_path"] = str(job.out_dir / "traces.jsonl")
    return out


def simple_evaluate(config: EvalConfig | None = None, *, backend: Backend | None = None, **kwargs) -> dict[str, Any]:
    """Rerank and score each dataset; returns the report written to ``report.json``.

    Pass an :class:`EvalConfig` or its fields as keyword arguments. A ready
    ``backend`` overrides ``model_type``/``model_args``.

    Raises:
        ConfigError: invalid configuration or unresolvable dataset.
    """
    if config is None:
        try:
            config = EvalConfig(**kwargs)
        except TypeError as e:
            raise ConfigError(str(e)) from None
    elif kwargs:
        config = dataclasses.replace(config, **kwargs)
    config.validate()

    datasets = [resolve_dataset(d, config.retriever, config.manifest) for d in config.datasets]
    if backend is None:
        backend = load_backend(config.model_type, config.model_args)
    reranker = Reranker(
        config.reranking_approach,
        model_fw_args=config.model_fw_args,
        reranking_args=config.reranking_args,
        backend=backend,
    )
    out_root = Path(config.output_dir) if config.output_dir else None
    if out_root is not None:
        out_root.mkdir(parents=True, exist_ok=True)

    report: dict[str, Any] = {"datasets": {}, "metrics": {}, "config": config.echo(), "traces_path": {}}
    report["config"]["backend"] = backend.describe()
    for paths in datasets:
        qrels = load_qrels(paths.qrels)
        queries = _load_queries(paths, config.topk)
        out_dir = None
        if out_root is not None:
            out_dir = out_root / _slug(paths.name)
            out_dir.mkdir(parents=True, exist_ok=True)
        job = _DatasetJob(config, reranker, paths, out_dir)
        start = time.perf_counter()
        run = job.run(queries)
        elapsed = time.perf_counter() - start
        entry = _dataset_report(job, run, qrels, job.sink.records())
        entry["wall_time_s"] = elapsed
        report["datasets"][paths.name] = entry
        report["metrics"][paths.name] = entry["metrics"]
        report["traces_path"][paths.name] = entry.get("traces_path")
        logger.info("%s: %s", paths.name, {k: round(v, 4) for k, v in entry["metrics"].items()})
    report["created_at"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    if out_root is not None:
        with open(out_root / "report.json", "w", encoding="utf-8") as f:
            json.dump(report, f, indent=2, ensure_ascii=False)
            f.write("\n")
    return report


def main(argv: Sequence[str] | None = None) -> int:
    from llm_rerank.cli import main as cli_main

    return cli_main(["evaluate", *(argv if argv is not None else sys.argv[1:])])


if __name__ == "__main__":
    raise SystemExit(main())
