"""Listwise models: permute a window of passages in one call."""

from __future__ import annotations

from typing import Sequence

from llm_rerank.backends.base import Backend
from llm_rerank.models.base import RankingModel
from llm_rerank.models.parsing import ParsedPermutation, parse_permutation, parse_selection


def render_items(docs: Sequence[str], max_words: int | None = None) -> str:
    lines = []
    for i, doc in enumerate(docs, 1):
        if max_words is not None:
            doc = " ".join(doc.split()[:max_words])
        lines.append(f"[{i}] {doc}")
    return "\n".join(lines)


class _ListPrompt(RankingModel):
    required_fields = ("query", "num", "items")

    def __init__(self, backend: Backend, max_window: int = 20, max_words: int | None = None, **kwargs):
        super().__init__(backend, **kwargs)
        self.max_window = max_window
        self.max_words = max_words

    def render(self, query: str, docs: Sequence[str], **extra):
        payload = {"query": query, "docs": list(docs), **extra}
        return self.template.render(
            payload, query=query, num=len(docs), items=render_items(docs, self.max_words), **extra
        )


class ListwiseGeneration(_ListPrompt):
    """RankGPT-style window ranking from generated ``[i] > [j] > ...`` text."""

    default_template = "rankgpt"

    def __call__(self, query: str, docs: Sequence[str]) -> list[int]:
        return self.rank(query, docs).indices

    def rank(self, query: str, docs: Sequence[str]) -> ParsedPermutation:
        if not 1 <= len(docs) <= self.max_window:
            raise ValueError(f"window of {len(docs)} docs outside [1, {self.max_window}]")
        if len(docs) == 1:
            return ParsedPermutation([0], False, "")
        with self._scope(window=len(docs)):
            result = self.backend.generate(self.render(query, docs), self.gen_opts)
        parsed = parse_permutation(result.text, len(docs))
        if parsed.repaired and result.trace is not None:
            result.trace.repaired = True
        return parsed


class FirstListwise(_ListPrompt):
    """Rank a window by the identifier logits at the first output position."""

    default_template = "first"

    def __call__(self, query: str, docs: Sequence[str]) -> list[int]:
        if not 1 <= len(docs) <= self.max_window:
            raise ValueError(f"window of {len(docs)} docs outside [1, {self.max_window}]")
        if len(docs) == 1:
            return [0]
        ids = [str(i + 1) for i in range(len(docs))]
        with self._scope(window=len(docs)):
            scores = self.backend.next_token_scores(self.render(query, docs), ids, require_single_token=True)
        return sorted(range(len(docs)), key=lambda i: (-scores[i].value, i))


class TournamentSelection(_ListPrompt):
    """Pick the ``m`` most relevant documents of a tournament group."""

    default_template = "tourrank"
    required_fields = ("query", "num", "items", "m")

    def __init__(self, backend: Backend, max_window: int = 100, **kwargs):
        super().__init__(backend, max_window=max_window, **kwargs)

    def __call__(self, query: str, docs: Sequence[str], m: int) -> list[int]:
        return self.select(query, docs, m).indices

    def select(self, query: str, docs: Sequence[str], m: int) -> ParsedPermutation:
        if not 1 <= m <= len(docs):
            raise ValueError(f"need 1 <= m <= {len(docs)}, got {m}")
        if m == len(docs):
            return ParsedPermutation(list(range(m)), False, "")
        with self._scope(window=len(docs)):
            result = self.backend.generate(self.render(query, docs, m=m), self.gen_opts)
        parsed = parse_selection(result.text, len(docs), m)
        if parsed.repaired and result.trace is not None:
            result.trace.repaired = True
        return parsed
