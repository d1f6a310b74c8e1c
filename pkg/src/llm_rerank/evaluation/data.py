"""Readers and writers for qrels, TREC runs and candidate lists."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from llm_rerank.errors import DuplicateDocError, ParseError
from llm_rerank.ranking import Candidate, Ranking

logger = logging.getLogger(__name__)

Qrels = dict[str, dict[str, int]]


@dataclass
class QueryCandidates:
    query_id: str
    query: str
    candidates: list[Candidate]


@dataclass(frozen=True)
class RunEntry:
    doc_id: str
    score: float
    rank: int


Run = dict[str, list[RunEntry]]


def load_qrels(path: str | Path) -> Qrels:
    """Read TREC qrels (``qid iter docid grade``)."""
    qrels: Qrels = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 4:
                raise ParseError(f"expected 4 fields, got {len(fields)}", path=str(path), line=lineno)
            qid, _, docid, grade = fields
            try:
                value = int(grade)
            except ValueError:
                raise ParseError(f"relevance grade {grade!r} is not an integer", path=str(path), line=lineno) from None
            if value < 0:
                raise ParseError(f"negative relevance grade {value}", path=str(path), line=lineno)
            qrels.setdefault(qid, {})[docid] = value
    if not qrels:
        raise ParseError("no relevance judgments", path=str(path))
    return qrels


def write_qrels(qrels: Mapping[str, Mapping[str, int]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for qid in sorted(qrels):
            for docid, grade in qrels[qid].items():
                f.write(f"{qid} 0 {docid} {grade}\n")


def load_candidates(path: str | Path, topk: int | None = None) -> dict[str, QueryCandidates]:
    """Read line-delimited JSON candidate lists, in retrieval order.

    Each line is ``{"query_id", "query_text", "candidates": [{"doc_id",
    "content", "score"}, ...]}``. Only the first ``topk`` candidates are kept.
    """
    out: dict[str, QueryCandidates] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                qid = str(rec["query_id"])
                query = rec["query_text"]
                raw = rec["candidates"]
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise ParseError(f"bad candidate record: {e}", path=str(path), line=lineno) from None
            if qid in out:
                raise ParseError(f"query {qid!r} appears twice", path=str(path), line=lineno)
            if topk is not None:
                raw = raw[:topk]
            seen = set()
            cands = []
            for rank, c in enumerate(raw, 1):
                try:
                    doc_id = str(c["doc_id"])
                    cand = Candidate(doc_id, c.get("content", ""), rank, float(c.get("score", 0.0)))
                except (KeyError, TypeError, ValueError) as e:
                    raise ParseError(f"bad candidate #{rank}: {e}", path=str(path), line=lineno) from None
                if doc_id in seen:
                    raise DuplicateDocError(doc_id, qid, path=str(path), line=lineno)
                seen.add(doc_id)
                cands.append(cand)
            out[qid] = QueryCandidates(qid, query, cands)
    return out


def write_candidates(queries: Iterable[QueryCandidates], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for q in queries:
            rec = {
                "query_id": q.query_id,
                "query_text": q.query,
                "candidates": [
                    {"doc_id": c.doc_id, "content": c.content, "score": c.initial_score} for c in q.candidates
                ],
            }
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def format_score(score: float) -> str:
    score = float(score)
    if score.is_integer() and abs(score) < 1e15:
        return str(int(score))
    return repr(score)


def run_from_ranking(ranking: Ranking, candidates: Sequence[Candidate]) -> list[RunEntry]:
    """Run entries for one query; synthetic ``n - rank + 1`` scores if unscored."""
    n = len(ranking.order)
    entries = []
    for pos, idx in enumerate(ranking.order):
        score = ranking.scores[pos] if ranking.scores is not None else n - pos
        entries.append(RunEntry(candidates[idx].doc_id, float(score), pos + 1))
    return entries


def _check_entries(qid: str, entries: Sequence[RunEntry]) -> None:
    if [e.rank for e in entries] != list(range(1, len(entries) + 1)):
        raise ValueError(f"query {qid}: ranks must run 1..{len(entries)}")
    if any(b.score > a.score for a, b in zip(entries, entries[1:])):
        raise ValueError(f"query {qid}: scores must not increase with rank")
    if len({e.doc_id for e in entries}) != len(entries):
        raise ValueError(f"query {qid}: duplicate doc_id")


def format_trec_lines(qid: str, entries: Sequence[RunEntry], tag: str) -> str:
    _check_entries(qid, entries)
    return "".join(f"{qid} Q0 {e.doc_id} {e.rank} {format_score(e.score)} {tag}\n" for e in entries)


def write_trec_run(run: Mapping[str, Sequence[RunEntry]], tag: str, path: str | Path) -> None:
    """Write ``qid Q0 docid rank score tag`` lines, queries sorted by id."""
    if not tag or any(ch.isspace() for ch in tag):
        raise ValueError(f"run tag must be a single non-empty word, got {tag!r}")
    text = "".join(format_trec_lines(qid, run[qid], tag) for qid in sorted(run))
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)


def parse_trec_run(lines: Iterable[str], source: str = "<run>", tags: dict[str, str] | None = None) -> Run:
    """Parse 6-column TREC run lines, each query ordered by rank.

    Scores that rise with rank are tolerated with a warning. Pass ``tags`` to
    collect the run tag per query.
    """
    run: Run = {}
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 6:
            raise ParseError(f"expected 6 fields, got {len(fields)}", path=source, line=lineno)
        qid, _, docid, rank, score, tag = fields
        try:
            entry = RunEntry(docid, float(score), int(rank))
        except ValueError:
            raise ParseError("rank must be an integer and score a number", path=source, line=lineno) from None
        run.setdefault(qid, []).append(entry)
        if tags is not None:
            tags[qid] = tag
    for qid, entries in run.items():
        entries.sort(key=lambda e: e.rank)
        ids = [e.doc_id for e in entries]
        if len(set(ids)) != len(ids):
            raise ParseError(f"duplicate doc_id in query {qid!r}", path=source)
        if any(b.score > a.score for a, b in zip(entries, entries[1:])):
            logger.warning("%s: scores increase with rank in query %s", source, qid)
    return run


def read_trec_run(path: str | Path, tags: dict[str, str] | None = None) -> Run:
    with open(path, encoding="utf-8") as f:
        return parse_trec_run(f, str(path), tags)
