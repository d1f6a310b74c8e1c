"""Ranking metrics compatible with trec_eval conventions.

Unjudged documents count as grade 0. Queries judged in the qrels but absent
from the run score 0 on every metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from llm_rerank.errors import NoOverlapError

DEFAULT_CUTOFFS = (1, 5, 10, 20, 100)


def _gain(rel: int, gain: str) -> float:
    if rel <= 0:
        return 0.0
    if gain == "linear":
        return float(rel)
    if gain == "exponential":
        return 2.0**rel - 1.0
    raise ValueError(f"unknown gain {gain!r}; expected 'linear' or 'exponential'")


def _check_k(k: int) -> None:
    if k < 1:
        raise ValueError(f"cutoff must be >= 1, got {k}")


def dcg(grades: Sequence[int], k: int, gain: str = "linear") -> float:
    return sum(_gain(g, gain) / math.log2(i + 2) for i, g in enumerate(grades[:k]))


def ndcg_at_k(ranked: Sequence[str], qrels: Mapping[str, int], k: int, gain: str = "linear") -> float:
    """nDCG@k with the ideal ordering taken from all judged grades.

    >>> round(ndcg_at_k(["a", "b"], {"a": 0, "b": 2}, 2), 5)
    0.63093
    """
    _check_k(k)
    ideal = dcg(sorted(qrels.values(), reverse=True), k, gain)
    if ideal <= 0:
        return 0.0
    actual = dcg([qrels.get(d, 0) for d in ranked], k, gain)
    return actual / ideal


def average_precision(ranked: Sequence[str], qrels: Mapping[str, int], threshold: int = 1) -> float:
    """Mean of precision at each relevant rank, over all relevant documents."""
    if threshold < 1:
        raise ValueError(f"threshold must be >= 1, got {threshold}")
    total = sum(1 for g in qrels.values() if g >= threshold)
    if total == 0:
        return 0.0
    hits = 0
    acc = 0.0
    for i, doc in enumerate(ranked, 1):
        if qrels.get(doc, 0) >= threshold:
            hits += 1
            acc += hits / i
    return acc / total


def recall_at_k(ranked: Sequence[str], qrels: Mapping[str, int], k: int, threshold: int = 1) -> float:
    _check_k(k)
    total = sum(1 for g in qrels.values() if g >= threshold)
    if total == 0:
        return 0.0
    found = sum(1 for d in ranked[:k] if qrels.get(d, 0) >= threshold)
    return found / total


def query_metrics(
    ranked: Sequence[str],
    qrels: Mapping[str, int],
    cutoffs: Sequence[int] = DEFAULT_CUTOFFS,
    map_threshold: int = 1,
    gain: str = "linear",
) -> dict[str, float]:
    out = {f"ndcg@{k}": ndcg_at_k(ranked, qrels, k, gain) for k in cutoffs}
    out["map"] = average_precision(ranked, qrels, map_threshold)
    out.update({f"recall@{k}": recall_at_k(ranked, qrels, k, map_threshold) for k in cutoffs})
    return out


@dataclass
class MetricReport:
    """Mean metrics over the judged queries, plus the per-query breakdown."""

    metrics: dict[str, float]
    num_queries: int
    per_query: dict[str, dict[str, float]] = field(default_factory=dict)
    missing_queries: list[str] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        return self.metrics[name]

    def to_dict(self) -> dict:
        return {
            "metrics": dict(self.metrics),
            "num_queries": self.num_queries,
            "missing_queries": list(self.missing_queries),
            "config": dict(self.config),
        }


def evaluate_run(
    run: Mapping[str, Sequence],
    qrels: Mapping[str, Mapping[str, int]],
    cutoffs: Sequence[int] = DEFAULT_CUTOFFS,
    map_threshold: int = 1,
    gain: str = "linear",
) -> MetricReport:
    """Score a run against qrels.

    ``run`` maps query ids to ranked doc ids, or to ``RunEntry`` lists sorted
    by rank. Run queries without judgments are ignored.
    """
    cutoffs = tuple(sorted(set(cutoffs)))
    for k in cutoffs:
        _check_k(k)
    if not set(run) & set(qrels):
        raise NoOverlapError("run and qrels share no query ids")
    per_query = {}
    missing = []
    for qid in sorted(qrels):
        ranked = [getattr(e, "doc_id", e) for e in run.get(qid, ())]
        if qid not in run:
            missing.append(qid)
        per_query[qid] = query_metrics(ranked, qrels[qid], cutoffs, map_threshold, gain)
    names = list(next(iter(per_query.values())))
    means = {name: sum(m[name] for m in per_query.values()) / len(per_query) for name in names}
    return MetricReport(
        metrics=means,
        num_queries=len(per_query),
        per_query=per_query,
        missing_queries=missing,
        config={"cutoffs": list(cutoffs), "map_threshold": map_threshold, "gain": gain},
    )
