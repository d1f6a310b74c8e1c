from __future__ import annotations

import json
import re
import threading
import time
from abc import ABC, abstractmethod
from typing import Any, Callable, Iterable, Sequence, TypeVar

from llm_rerank.backends.retry import RetryPolicy, retry_call
from llm_rerank.backends.types import (
    BackendCapabilities,
    ChatMessage,
    GenerationOptions,
    GenerationResult,
    LoglikelihoodResult,
    MessageLike,
    TokenScore,
    as_messages,
)
from llm_rerank.errors import CapabilityNotSupported
from llm_rerank.tracing import TraceSink, current_scope

T = TypeVar("T")

# Structured marker lines embedded by prompt templates. The mock backend
# dispatches on them; every other backend strips them before sending.
_MARKER_RE = re.compile(r"^#(intent|payload):(.*)#$")


def intent_marker(intent: str) -> str:
    return f"#intent:{intent}#"


def payload_marker(payload: dict[str, Any]) -> str:
    # ensure_ascii keeps the payload on one line whatever the documents hold
    return "#payload:" + json.dumps(payload, ensure_ascii=True, separators=(",", ":")) + "#"


def read_markers(messages: Iterable[ChatMessage]) -> tuple[str | None, dict[str, Any] | None]:
    intent = payload = None
    for m in messages:
        for line in m.content.splitlines():
            match = _MARKER_RE.match(line)
            if not match:
                continue
            if match.group(1) == "intent":
                intent = match.group(2)
            else:
                payload = json.loads(match.group(2))
    return intent, payload


def strip_markers(messages: Iterable[ChatMessage]) -> list[ChatMessage]:
    out = []
    for m in messages:
        if "#" in m.content:
            lines = [ln for ln in m.content.split("\n") if not _MARKER_RE.match(ln)]
            m = ChatMessage(m.role, "\n".join(lines).strip("\n"))
        out.append(m)
    return out


class Backend(ABC):
    """Uniform access to an LLM through generate / loglikelihood / logits.

    Subclasses implement the ``_generate``, ``_loglikelihood`` and
    ``_next_token_scores`` hooks. This class handles argument checks, the
    in-flight bound, retries, latency measurement and trace emission.
    """

    name = "base"

    def __init__(
        self,
        retry: RetryPolicy | None = None,
        max_in_flight: int = 8,
        traces: TraceSink | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        self.retry = retry or RetryPolicy()
        self.max_in_flight = max_in_flight
        self.traces = traces if traces is not None else TraceSink()
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_in_flight)

    @property
    @abstractmethod
    def capabilities(self) -> BackendCapabilities: ...

    def bind_query(self, query_id: str, query: str, candidates: Sequence[Any]) -> None:
        """Called once per query before reranking; backends may ignore it."""

    def describe(self) -> dict[str, Any]:
        return {"backend": self.name}

    # -- public contract -------------------------------------------------

    def generate(self, messages: Sequence[MessageLike], opts: GenerationOptions | None = None) -> GenerationResult:
        messages = self._check_messages(messages)
        self._require("generate", self.capabilities.supports_generate)
        opts = opts or GenerationOptions()
        start = time.perf_counter()
        result, attempts = self._call(lambda: self._generate(messages, opts))
        result.latency = (time.perf_counter() - start) * 1000
        result.attempts = attempts
        result.trace = self._emit(
            "generate",
            messages,
            latency_ms=result.latency,
            prompt_tokens=result.prompt_tokens,
            generated_tokens=result.generated_tokens,
            raw_output=result.text,
            attempts=attempts,
        )
        return result

    def loglikelihood(self, messages: Sequence[MessageLike], target: str) -> LoglikelihoodResult:
        messages = self._check_messages(messages)
        self._require("loglikelihood", self.capabilities.supports_loglikelihood)
        if not target:
            raise ValueError("loglikelihood target must be non-empty")
        start = time.perf_counter()
        result, attempts = self._call(lambda: self._loglikelihood(messages, target))
        result.latency = (time.perf_counter() - start) * 1000
        result.attempts = attempts
        self._emit(
            "loglikelihood",
            messages,
            latency_ms=result.latency,
            prompt_tokens=result.prompt_tokens,
            raw_output=json.dumps(
                {"target": target, "total_logprob": result.total_logprob, "tokens": result.target_token_count}
            ),
            attempts=attempts,
        )
        return result

    def next_token_scores(
        self,
        messages: Sequence[MessageLike],
        candidate_tokens: Sequence[str],
        require_single_token: bool = False,
    ) -> list[TokenScore]:
        """Score each candidate as the next token after ``messages``.

        Multi-token candidates are scored by their first token unless
        ``require_single_token`` is set, in which case they are rejected.
        """
        messages = self._check_messages(messages)
        self._require("next_token_scores", self.capabilities.supports_logits)
        if not candidate_tokens:
            raise ValueError("candidate_tokens must be non-empty")
        start = time.perf_counter()
        (scores, prompt_tokens), attempts = self._call(
            lambda: self._next_token_scores(messages, list(candidate_tokens), require_single_token)
        )
        assert len(scores) == len(candidate_tokens)
        latency = (time.perf_counter() - start) * 1000
        self._emit(
            "next_token_scores",
            messages,
            latency_ms=latency,
            prompt_tokens=prompt_tokens,
            generated_tokens=1,
            raw_output=json.dumps({s.token_text: s.value for s in scores}, ensure_ascii=False),
            attempts=attempts,
        )
        return scores

    # -- hooks -----------------------------------------------------------

    @abstractmethod
    def _generate(self, messages: list[ChatMessage], opts: GenerationOptions) -> GenerationResult: ...

    def _loglikelihood(self, messages: list[ChatMessage], target: str) -> LoglikelihoodResult:
        raise CapabilityNotSupported(f"{self.name} backend does not implement loglikelihood")

    def _next_token_scores(
        self, messages: list[ChatMessage], tokens: list[str], require_single_token: bool
    ) -> tuple[list[TokenScore], int]:
        raise CapabilityNotSupported(f"{self.name} backend does not implement next_token_scores")

    # -- plumbing --------------------------------------------------------

    @staticmethod
    def _check_messages(messages: Sequence[MessageLike]) -> list[ChatMessage]:
        if not messages:
            raise ValueError("messages must be non-empty")
        return as_messages(messages)

    def _require(self, op: str, supported: bool) -> None:
        if not supported:
            raise CapabilityNotSupported(f"{self.name} backend does not support {op}")

    def _call(self, op: Callable[[], T]) -> tuple[T, int]:
        with self._slots:
            return retry_call(op, self.retry, sleep=self._sleep)

    def _emit(self, op: str, messages: list[ChatMessage], **fields: Any):
        scope = current_scope()
        sink = scope.sink if scope.sink is not None else self.traces
        prompt = None
        if sink.capture_prompts:
            prompt = [m.to_dict() for m in strip_markers(messages)]
        return sink.emit(
            scope.query_id, scope.paradigm, op, template=scope.template, window=scope.window, prompt=prompt, **fields
        )
