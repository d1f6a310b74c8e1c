"""Export listwise reranking traces as fine-tuning conversations.

Each sample is one JSON line::

    {"id": "...", "messages": [{"role": "system", ...}, {"role": "user", ...},
                               {"role": "assistant", "content": "[2] > [1] > [3]"}]}
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

from llm_rerank.errors import InvalidTraceError
from llm_rerank.models.parsing import format_permutation, parse_permutation
from llm_rerank.tracing import TraceRecord

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")


def check_conversation(messages: Sequence[dict[str, Any]]) -> None:
    """Raise InvalidTraceError unless ``messages`` is [system] (user assistant)+."""
    if not messages:
        raise InvalidTraceError("conversation is empty")
    for m in messages:
        if not isinstance(m, dict) or set(m) != {"role", "content"}:
            raise InvalidTraceError(f"message must have exactly 'role' and 'content': {m!r}")
        if m["role"] not in ROLES or not isinstance(m["content"], str):
            raise InvalidTraceError(f"bad message {m!r}")
    roles = [m["role"] for m in messages]
    if roles[0] == "system":
        roles = roles[1:]
    if not roles or len(roles) % 2:
        raise InvalidTraceError("conversation must be user/assistant pairs after the optional system turn")
    for i, role in enumerate(roles):
        expected = "user" if i % 2 == 0 else "assistant"
        if role != expected:
            raise InvalidTraceError(f"turn {i} is {role!r}, expected {expected!r}")


@dataclass
class SftSample:
    id: str
    messages: list[dict[str, str]]

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise InvalidTraceError("sample id must be a non-empty string")
        check_conversation(self.messages)

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "messages": [dict(m) for m in self.messages]}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SftSample":
        if not isinstance(data, dict) or set(data) != {"id", "messages"}:
            raise InvalidTraceError("SFT record must have exactly 'id' and 'messages'")
        return cls(data["id"], list(data["messages"]))


@dataclass
class SftSource:
    """A rendered listwise prompt and the permutation to teach for it.

    ``permutation`` is 0-based over the window shown in the prompt.
    """

    id: str
    prompt: list[dict[str, str]]
    permutation: list[int]

    def to_sample(self) -> SftSample:
        if sorted(self.permutation) != list(range(len(self.permutation))) or not self.permutation:
            raise InvalidTraceError(f"{self.id}: target is not a permutation: {self.permutation}")
        answer = {"role": "assistant", "content": format_permutation(self.permutation)}
        return SftSample(self.id, [dict(m) for m in self.prompt] + [answer])


def export_sft(sources: Iterable[SftSource], out_path: str | Path) -> int:
    """Write one conversation per source; returns the number written.

    Every sample is validated before anything is written.
    """
    samples = [s.to_sample() for s in sources]
    ids = [s.id for s in samples]
    if len(set(ids)) != len(ids):
        raise InvalidTraceError("sample ids must be unique")
    with open(out_path, "w", encoding="utf-8") as f:
        for s in samples:
            f.write(json.dumps(s.to_dict(), ensure_ascii=False) + "\n")
    return len(samples)


def read_sft(path: str | Path) -> list[SftSample]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                out.append(SftSample.from_dict(json.loads(line)))
            except json.JSONDecodeError as e:
                raise InvalidTraceError(f"{path}:{lineno}: {e}") from e
    return out


def sources_from_traces(records: Iterable[TraceRecord], skip_repaired: bool = False) -> list[SftSource]:
    """Turn captured listwise generation calls into SFT sources.

    The teacher's parsed output becomes the target. Only ``generate`` calls
    with a window size are used; they must carry the rendered prompt, so
    evaluate with prompt capture switched on.

    Raises:
        InvalidTraceError: a usable record has no captured prompt.
    """
    out = []
    for rec in sorted(records, key=lambda r: (r.query_id, r.call_index)):
        if rec.op != "generate" or rec.window is None:
            continue
        if skip_repaired and rec.repaired:
            continue
        if not rec.prompt:
            raise InvalidTraceError(
                f"trace {rec.query_id}/{rec.call_index} has no prompt; re-run with prompt capture enabled"
            )
        parsed = parse_permutation(rec.raw_output, rec.window)
        out.append(SftSource(f"{rec.query_id}-{rec.call_index}", rec.prompt, parsed.indices))
    logger.info("built %d SFT sources", len(out))
    return out
