"""Per-call trace records: latency, token counts and raw LLM output.

Backends emit one :class:`TraceRecord` per successful call. Which query and
paradigm a call belongs to is carried by a context variable set with
:func:`trace_scope`, so model functions and drivers never pass it around.
"""

from __future__ import annotations

import contextlib
import contextvars
import dataclasses
import json
import threading
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Iterator

from llm_rerank.errors import InvalidTraceError


@dataclass
class TraceRecord:
    query_id: str
    call_index: int
    paradigm: str
    op: str
    latency_ms: float = 0.0
    prompt_tokens: int = 0
    generated_tokens: int = 0
    raw_output: str = ""
    repaired: bool = False
    attempts: int = 1
    template: str | None = None
    window: int | None = None
    error: str | None = None
    prompt: list[dict[str, str]] | None = None

    def to_dict(self) -> dict[str, Any]:
        # shallow on purpose: asdict deep-copies and dominates trace writing
        data = {name: getattr(self, name) for name in _FIELDS}
        if self.prompt is not None:
            data["prompt"] = [dict(m) for m in self.prompt]
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TraceRecord":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise InvalidTraceError(f"unknown trace fields: {sorted(unknown)}")
        try:
            rec = cls(**data)
        except TypeError as e:
            raise InvalidTraceError(str(e)) from e
        if rec.prompt_tokens < 0 or rec.generated_tokens < 0 or rec.latency_ms < 0:
            raise InvalidTraceError(f"negative count in trace record {rec.query_id}/{rec.call_index}")
        return rec


_FIELDS = tuple(f.name for f in dataclasses.fields(TraceRecord))


class TraceSink:
    """Thread-safe collector of trace records.

    ``call_index`` is assigned here, so it is unique per query even when calls
    for the same query run on several threads.
    """

    def __init__(self, capture_prompts: bool = False):
        self.capture_prompts = capture_prompts
        self._lock = threading.Lock()
        self._records: list[TraceRecord] = []
        self._next_index: dict[str, int] = defaultdict(int)

    def emit(self, query_id: str, paradigm: str, op: str, **fields: Any) -> TraceRecord:
        with self._lock:
            index = self._next_index[query_id]
            self._next_index[query_id] = index + 1
            rec = TraceRecord(query_id=query_id, call_index=index, paradigm=paradigm, op=op, **fields)
            self._records.append(rec)
        return rec

    def add(self, records: Iterable[TraceRecord]) -> None:
        """Adopt records written earlier (resume), keeping their indices."""
        with self._lock:
            for rec in records:
                self._records.append(rec)
                nxt = self._next_index[rec.query_id]
                self._next_index[rec.query_id] = max(nxt, rec.call_index + 1)

    def records(self, query_id: str | None = None) -> list[TraceRecord]:
        with self._lock:
            recs = list(self._records)
        if query_id is not None:
            recs = [r for r in recs if r.query_id == query_id]
        return recs

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def clear(self) -> None:
        with self._lock:
            self._records.clear()
            self._next_index.clear()

    def write_jsonl(self, path: str | Path) -> None:
        write_traces(self.records(), path)


def write_traces(records: Iterable[TraceRecord], path: str | Path) -> None:
    ordered = sorted(records, key=lambda r: (r.query_id, r.call_index))
    with open(path, "w", encoding="utf-8") as f:
        for rec in ordered:
            f.write(json.dumps(rec.to_dict(), ensure_ascii=False) + "\n")


def read_traces(path: str | Path) -> list[TraceRecord]:
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as e:
                raise InvalidTraceError(f"{path}:{lineno}: {e}") from e
            records.append(TraceRecord.from_dict(data))
    return records


def summarize(records: Iterable[TraceRecord]) -> dict[str, Any]:
    """Aggregate call counts, tokens and latency over a set of records.

    ``op == "error"`` records mark queries that fell back to the retrieval
    order; they are listed under ``failed_queries`` and not counted as calls.
    """
    prompt = generated = repaired = 0
    latency = 0.0
    per_query: Counter[str] = Counter()
    by_op: Counter[str] = Counter()
    failed = set()
    for r in records:
        per_query[r.query_id] += 0
        if r.op == "error":
            failed.add(r.query_id)
            continue
        per_query[r.query_id] += 1
        by_op[r.op] += 1
        prompt += r.prompt_tokens
        generated += r.generated_tokens
        latency += r.latency_ms
        repaired += int(r.repaired)
    calls = sum(per_query.values())
    return {
        "calls": calls,
        "calls_by_op": dict(sorted(by_op.items())),
        "calls_per_query": dict(sorted(per_query.items())),
        "mean_calls_per_query": calls / len(per_query) if per_query else 0.0,
        "prompt_tokens": prompt,
        "generated_tokens": generated,
        "latency_ms": latency,
        "repaired": repaired,
        "failed_queries": sorted(failed),
    }


@dataclass(frozen=True)
class TraceScope:
    query_id: str = ""
    paradigm: str = ""
    sink: TraceSink | None = None
    template: str | None = None
    window: int | None = None


_SCOPE: contextvars.ContextVar[TraceScope] = contextvars.ContextVar("llm_rerank_trace_scope", default=TraceScope())


def current_scope() -> TraceScope:
    return _SCOPE.get()


@contextlib.contextmanager
def trace_scope(**changes: Any) -> Iterator[TraceScope]:
    """Override fields of the active scope for the duration of the block.

    >>> with trace_scope(query_id="q1", paradigm="pointwise"):
    ...     current_scope().query_id
    'q1'
    """
    scope = dataclasses.replace(_SCOPE.get(), **changes)
    token = _SCOPE.set(scope)
    try:
        yield scope
    finally:
        _SCOPE.reset(token)
