"""LLM backends: an OpenAI-compatible HTTP client and a deterministic mock."""

from __future__ import annotations

from typing import Any, Mapping

from llm_rerank.backends.base import Backend, intent_marker, payload_marker, read_markers, strip_markers
from llm_rerank.backends.mock import MockBackend, load_score_table, tokenize
from llm_rerank.backends.openai_compat import API_KEY_ENV, OpenAICompatibleBackend
from llm_rerank.backends.retry import RetryPolicy, retry_call, with_retry
from llm_rerank.backends.types import (
    BackendCapabilities,
    ChatMessage,
    GenerationOptions,
    GenerationResult,
    LoglikelihoodResult,
    TokenScore,
)
from llm_rerank.errors import ConfigError

BACKENDS = {
    "openai_compatible": OpenAICompatibleBackend,
    "openai": OpenAICompatibleBackend,
    "mock": MockBackend,
}


def load_backend(model_type: str, model_args: Mapping[str, Any] | None = None, **kwargs) -> Backend:
    """Instantiate a backend from CLI-style ``model_type`` / ``model_args``."""
    try:
        cls = BACKENDS[model_type]
    except KeyError:
        raise ConfigError(f"unknown model_type {model_type!r}; choose from {sorted(BACKENDS)}") from None
    try:
        return cls.from_args(dict(model_args or {}), **kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad model_args for {model_type}: {e}") from e


__all__ = [
    "API_KEY_ENV",
    "BACKENDS",
    "Backend",
    "BackendCapabilities",
    "ChatMessage",
    "GenerationOptions",
    "GenerationResult",
    "LoglikelihoodResult",
    "MockBackend",
    "OpenAICompatibleBackend",
    "RetryPolicy",
    "TokenScore",
    "intent_marker",
    "load_backend",
    "load_score_table",
    "payload_marker",
    "read_markers",
    "retry_call",
    "strip_markers",
    "tokenize",
    "with_retry",
]
