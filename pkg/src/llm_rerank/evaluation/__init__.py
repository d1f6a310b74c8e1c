"""Dataset I/O, metrics and the batch evaluator."""

from llm_rerank.evaluation.data import (
    QueryCandidates,
    RunEntry,
    load_candidates,
    load_qrels,
    read_trec_run,
    run_from_ranking,
    write_candidates,
    write_qrels,
    write_trec_run,
)
from llm_rerank.evaluation.metrics import MetricReport, average_precision, evaluate_run, ndcg_at_k, recall_at_k

__all__ = [
    "MetricReport",
    "QueryCandidates",
    "RunEntry",
    "average_precision",
    "evaluate_run",
    "load_candidates",
    "load_qrels",
    "ndcg_at_k",
    "read_trec_run",
    "recall_at_k",
    "run_from_ranking",
    "write_candidates",
    "write_qrels",
    "write_trec_run",
]
