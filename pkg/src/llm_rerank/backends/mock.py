"""Deterministic in-process backend driven by a hidden relevance table.

The mock never parses natural language. Prompt templates carry an
``#intent:...#`` line and a JSON ``#payload:...#`` line (see
:mod:`llm_rerank.backends.base`); the mock reads the query and documents from
the payload and answers as a perfectly calibrated ranker would:

* pointwise: ``yes``/``no`` logits of ``+s``/``-s``; label logits
  ``gain * atan(s)`` (bounded, so the softmax over labels never saturates);
  query log-likelihood ``-softplus(-s)`` per token
* pairwise: identifier ``A``/``B`` logits equal to the two hidden scores
* listwise: ``[i] > [j] > ...`` by descending score; identifier logits = score
* select: the top-``m`` identifiers

Scripted answers (``reply``, ``token_scores``, ``logprob_per_token``,
``loglikelihood_table``) take precedence over the oracle.
"""

from __future__ import annotations

import collections
import hashlib
import json
import math
import re
import threading
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence, Union

from llm_rerank.backends.base import Backend, read_markers, strip_markers
from llm_rerank.backends.types import (
    BackendCapabilities,
    ChatMessage,
    GenerationOptions,
    GenerationResult,
    LoglikelihoodResult,
    TokenScore,
)
from llm_rerank.errors import MockOracleError, TokenResolutionError

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")

Reply = Union[str, Callable[[list[ChatMessage]], str]]
TokenTable = Union[Mapping[str, float], Callable[[list[ChatMessage], list[str]], Sequence[float]]]


def tokenize(text: str) -> list[str]:
    """Word/punctuation split used for the mock's token accounting."""
    return _TOKEN_RE.findall(text)


def _softplus(x: float) -> float:
    return x if x > 30 else math.log1p(math.exp(x))


def load_score_table(path: str | Path) -> dict[str, dict[str, float]]:
    """Read ``{"query_id": {"doc_id": score, ...}, ...}`` from JSON."""
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict) or not all(isinstance(v, dict) for v in data.values()):
        raise ValueError(f"{path}: score table must map query_id -> {{doc_id: score}}")
    return {str(q): {str(d): float(s) for d, s in docs.items()} for q, docs in data.items()}


class MockBackend(Backend):
    name = "mock"

    def __init__(
        self,
        scores: Mapping[str, Mapping[str, float]] | None = None,
        *,
        reply: Reply | None = None,
        token_scores: TokenTable | None = None,
        logprob_per_token: float | None = None,
        loglikelihood_table: Mapping[tuple[str, str], float] | None = None,
        default_score: float | None = None,
        errors: Iterable[BaseException] = (),
        supports_loglikelihood: bool = True,
        supports_logits: bool = True,
        **kwargs,
    ):
        kwargs.setdefault("sleep", lambda _: None)
        super().__init__(**kwargs)
        self.scores = {q: dict(d) for q, d in (scores or {}).items()}
        self.reply = reply
        self.token_scores = token_scores
        self.logprob_per_token = logprob_per_token
        self.loglikelihood_table = dict(loglikelihood_table or {})
        self.default_score = default_score
        self._errors = collections.deque(errors)
        self._caps = BackendCapabilities(True, supports_loglikelihood, supports_logits)
        self._by_text: dict[tuple[str, str], float] = {}
        self._lock = threading.Lock()
        self.call_counts: collections.Counter[str] = collections.Counter()

    @classmethod
    def from_args(cls, args: Mapping[str, Any] | None = None, **kwargs) -> "MockBackend":
        args = dict(args or {})
        table = args.pop("scores", None)
        if isinstance(table, (str, Path)):
            table = load_score_table(table)
        for key in ("default_score", "logprob_per_token"):
            if key in args:
                args[key] = float(args[key])
        for key in ("supports_logits", "supports_loglikelihood"):
            if isinstance(args.get(key), str):
                args[key] = args[key].lower() in ("1", "true", "yes")
        args.pop("model", None)
        return cls(table, **args, **kwargs)

    @property
    def capabilities(self) -> BackendCapabilities:
        return self._caps

    def describe(self) -> dict[str, Any]:
        return {"backend": self.name, "queries": len(self.scores)}

    @staticmethod
    def context_key(messages: Sequence[ChatMessage]) -> str:
        """Stable hash of a conversation, for ``loglikelihood_table`` keys."""
        blob = json.dumps([m.to_dict() for m in strip_markers(messages)], sort_keys=True)
        return hashlib.sha1(blob.encode("utf-8")).hexdigest()

    def bind_query(self, query_id: str, query: str, candidates: Sequence[Any]) -> None:
        table = self.scores.get(query_id, {})
        with self._lock:
            for c in candidates:
                if c.doc_id in table:
                    self._by_text[(query, c.content)] = table[c.doc_id]

    def hidden_score(self, query: str, doc: str) -> float:
        """Resolve a (query text, doc text) pair against the hidden table.

        Bound candidates are looked up by text; otherwise the query text is
        taken as a query_id and the document text as a doc_id.
        """
        key = (query, doc)
        if key in self._by_text:
            return self._by_text[key]
        table = self.scores.get(query)
        if table is not None and doc in table:
            return table[doc]
        if self.default_score is not None:
            return self.default_score
        raise MockOracleError(f"no hidden score for document {doc[:60]!r} under query {query[:60]!r}")

    # -- hooks -----------------------------------------------------------

    def _tick(self, op: str) -> None:
        with self._lock:
            self.call_counts[op] += 1
            err = self._errors.popleft() if self._errors else None
        if err is not None:
            raise err

    @staticmethod
    def _prompt_tokens(messages: list[ChatMessage]) -> int:
        return sum(len(tokenize(m.content)) for m in strip_markers(messages))

    def _payload(self, messages: list[ChatMessage]) -> tuple[str, dict[str, Any]]:
        intent, payload = read_markers(messages)
        if intent is None or payload is None:
            raise MockOracleError("prompt carries no #intent# / #payload# markers")
        return intent, payload

    def _doc_scores(self, payload: dict[str, Any]) -> list[float]:
        return [self.hidden_score(payload["query"], d) for d in payload["docs"]]

    def _generate(self, messages: list[ChatMessage], opts: GenerationOptions) -> GenerationResult:
        self._tick("generate")
        if self.reply is not None:
            text = self.reply if isinstance(self.reply, str) else self.reply(messages)
        else:
            text = self._oracle_text(messages)
        return GenerationResult(
            text=text,
            prompt_tokens=self._prompt_tokens(messages),
            generated_tokens=len(tokenize(text)),
        )

    def _oracle_text(self, messages: list[ChatMessage]) -> str:
        intent, payload = self._payload(messages)
        if intent == "pointwise":
            return "yes" if self.hidden_score(payload["query"], payload["doc"]) > 0 else "no"
        scores = self._doc_scores(payload)
        order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
        if intent == "pairwise":
            return "A" if order[0] == 0 else "B"
        if intent == "listwise":
            return " > ".join(f"[{i + 1}]" for i in order)
        if intent == "select":
            return " > ".join(f"[{i + 1}]" for i in order[: int(payload["m"])])
        raise MockOracleError(f"unknown intent {intent!r}")

    def _next_token_scores(
        self, messages: list[ChatMessage], tokens: list[str], require_single_token: bool
    ) -> tuple[list[TokenScore], int]:
        self._tick("next_token_scores")
        firsts = []
        for tok in tokens:
            pieces = tokenize(tok)
            if not pieces:
                raise TokenResolutionError(f"candidate {tok!r} maps to zero tokens")
            if require_single_token and len(pieces) > 1:
                raise TokenResolutionError(f"candidate {tok!r} is not a single token")
            firsts.append(pieces[0])

        if callable(self.token_scores):
            values = [float(v) for v in self.token_scores(messages, tokens)]
        elif self.token_scores is not None:
            values = []
            for tok, first in zip(tokens, firsts):
                if tok in self.token_scores:
                    values.append(float(self.token_scores[tok]))
                elif first in self.token_scores:
                    values.append(float(self.token_scores[first]))
                else:
                    raise TokenResolutionError(f"scripted table has no score for {tok!r}")
        else:
            values = self._oracle_token_values(messages, firsts)
        scores = [TokenScore(t, v, is_logprob=False) for t, v in zip(tokens, values)]
        return scores, self._prompt_tokens(messages)

    def _oracle_token_values(self, messages: list[ChatMessage], firsts: list[str]) -> list[float]:
        intent, payload = self._payload(messages)
        if intent == "pointwise":
            s = self.hidden_score(payload["query"], payload["doc"])
            if "labels" in payload:
                gains = {tokenize(text)[0]: float(g) for text, g in payload["labels"]}
                table = {t: g * math.atan(s) for t, g in gains.items()}
            else:
                table = {"yes": s, "no": -s}
        elif intent in ("pairwise", "listwise", "select"):
            scores = self._doc_scores(payload)
            names = ["A", "B"] if intent == "pairwise" else [str(i + 1) for i in range(len(scores))]
            table = dict(zip(names, scores))
        else:
            raise MockOracleError(f"unknown intent {intent!r}")
        try:
            return [table[f] for f in firsts]
        except KeyError as e:
            raise TokenResolutionError(f"mock oracle cannot score token {e.args[0]!r} for intent {intent}") from None

    def _loglikelihood(self, messages: list[ChatMessage], target: str) -> LoglikelihoodResult:
        self._tick("loglikelihood")
        n = len(tokenize(target))
        if n == 0:
            raise TokenResolutionError(f"target {target!r} maps to zero tokens")
        prompt_tokens = self._prompt_tokens(messages)
        key = (self.context_key(messages), target)
        if key in self.loglikelihood_table:
            total = float(self.loglikelihood_table[key])
        elif self.logprob_per_token is not None:
            total = self.logprob_per_token * n
        else:
            intent, payload = self._payload(messages)
            if intent != "pointwise":
                raise MockOracleError(f"loglikelihood is only scored for pointwise prompts, got {intent!r}")
            s = self.hidden_score(payload["query"], payload["doc"])
            if "labels" in payload:
                gains = {text: float(g) for text, g in payload["labels"]}
                if target not in gains:
                    raise MockOracleError(f"target {target!r} is not one of the payload labels")
                a = math.atan(s)
                top = max(g * a for g in gains.values())
                total = gains[target] * a - top - 1.0
            else:
                total = -n * _softplus(-s)
        return LoglikelihoodResult(total_logprob=total, target_token_count=n, prompt_tokens=prompt_tokens)
