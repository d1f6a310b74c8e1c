"""Pointwise models: one (query, document) pair per LLM call."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from llm_rerank.backends.base import Backend
from llm_rerank.errors import CapabilityNotSupported
from llm_rerank.models.base import RankingModel


class RelevanceGeneration(RankingModel):
    """Score a passage by the yes/no logits after a relevance question.

    ``score="yes-no"`` (default) returns ``logit(yes) - logit(no)``, which is
    immune to per-call logit shifts; ``score="yes"`` returns the bare yes logit.
    """

    default_template = "relevance_generation"
    required_fields = ("query", "doc")

    def __init__(self, backend: Backend, score: str = "yes-no", **kwargs):
        super().__init__(backend, **kwargs)
        if score not in ("yes-no", "yes"):
            raise ValueError(f"score must be 'yes-no' or 'yes', got {score!r}")
        self.score = score

    def __call__(self, query: str, doc: str) -> float:
        messages = self.template.render({"query": query, "doc": doc}, query=query, doc=doc)
        with self._scope():
            yes, no = self.backend.next_token_scores(messages, ["yes", "no"])
        if self.score == "yes":
            return yes.value
        return yes.value - no.value


class QueryGeneration(RankingModel):
    """Mean per-token log-probability of the query given the passage."""

    default_template = "query_generation"
    required_fields = ("doc",)

    def __call__(self, query: str, doc: str) -> float:
        messages = self.template.render({"query": query, "doc": doc}, query=query, doc=doc)
        with self._scope():
            result = self.backend.loglikelihood(messages, query)
        return result.total_logprob / result.target_token_count


@dataclass(frozen=True)
class LabelSet:
    labels: tuple[tuple[str, float], ...] = (
        ("Not Relevant", 0.0),
        ("Somewhat Relevant", 1.0),
        ("Highly Relevant", 2.0),
    )

    def __post_init__(self):
        labels = tuple((str(t), float(g)) for t, g in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise ValueError("a label set needs at least two labels")
        gains = [g for _, g in labels]
        if any(a >= b for a, b in zip(gains, gains[1:])):
            raise ValueError(f"label gains must be strictly increasing, got {gains}")

    @property
    def texts(self) -> list[str]:
        return [t for t, _ in self.labels]

    @property
    def gains(self) -> list[float]:
        return [g for _, g in self.labels]


def expected_gain(scores: Sequence[float], gains: Sequence[float]) -> float:
    """Softmax the label scores and return the expected gain."""
    top = max(scores)
    weights = [math.exp(s - top) for s in scores]
    total = sum(weights)
    value = sum(w * g for w, g in zip(weights, gains)) / total
    # rounding can push the mean a hair outside the gain range
    return min(max(value, min(gains)), max(gains))


class FineGrainedRelevance(RankingModel):
    """Expected relevance gain over graded labels.

    Label scores come from first-token logits when the backend has them
    (``route="logits"``), otherwise from the log-likelihood of each full label
    text (``route="loglikelihood"``). ``route="auto"`` picks the former if
    available.
    """

    default_template = "fine_grained"
    required_fields = ("query", "doc")

    def __init__(self, backend: Backend, labels: LabelSet | None = None, route: str = "auto", **kwargs):
        super().__init__(backend, **kwargs)
        self.labels = labels or LabelSet()
        caps = backend.capabilities
        if route == "auto":
            route = "logits" if caps.supports_logits else "loglikelihood"
        if route not in ("logits", "loglikelihood"):
            raise ValueError(f"unknown route {route!r}")
        supported = caps.supports_logits if route == "logits" else caps.supports_loglikelihood
        if not supported:
            raise CapabilityNotSupported(f"{backend.name} backend cannot serve fine-grained relevance via {route}")
        self.route = route

    def __call__(self, query: str, doc: str) -> float:
        payload = {"query": query, "doc": doc, "labels": [list(pair) for pair in self.labels.labels]}
        label_text = ", ".join(f'"{t}"' for t in self.labels.texts)
        messages = self.template.render(payload, query=query, doc=doc, labels=label_text)
        with self._scope():
            if self.route == "logits":
                scores = [s.value for s in self.backend.next_token_scores(messages, self.labels.texts)]
            else:
                scores = [self.backend.loglikelihood(messages, t).total_logprob for t in self.labels.texts]
        return expected_gain(scores, self.labels.gains)


class EnsemblePointwise:
    """Weighted sum of several pointwise scorers."""

    def __init__(self, members: Sequence[Callable[[str, str], float]], weights: Sequence[float] | None = None):
        if not members:
            raise ValueError("ensemble needs at least one member")
        weights = [1.0] * len(members) if weights is None else [float(w) for w in weights]
        if len(weights) != len(members):
            raise ValueError(f"{len(members)} members but {len(weights)} weights")
        self.members = list(members)
        self.weights = weights

    def __call__(self, query: str, doc: str) -> float:
        return sum(w * m(query, doc) for m, w in zip(self.members, self.weights))
