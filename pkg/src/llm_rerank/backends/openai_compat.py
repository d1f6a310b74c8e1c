"""Backend for any service speaking the OpenAI chat-completions protocol."""

from __future__ import annotations

import json
import logging
import os
from typing import Any, Mapping

import httpx

from llm_rerank.backends.base import Backend, strip_markers
from llm_rerank.backends.types import (
    BackendCapabilities,
    ChatMessage,
    GenerationOptions,
    GenerationResult,
    LoglikelihoodResult,
    TokenScore,
)
from llm_rerank.errors import CapabilityNotSupported, MalformedResponse, TokenResolutionError, TransportError

logger = logging.getLogger(__name__)

API_KEY_ENV = "LLM4RANKING_API_KEY"
DEFAULT_BASE_URL = "https://api.openai.com/v1"
# Tokens absent from top_logprobs are scored this far below the lowest one
# returned, so argmax ordering is kept with a finite value.
MISSING_TOKEN_GAP = 10.0


def _truthy(value: Any) -> bool:
    if isinstance(value, str):
        return value.strip().lower() in ("1", "true", "yes", "on")
    return bool(value)


class OpenAICompatibleBackend(Backend):
    """Chat-completions client with optional logprob-based scoring.

    ``next_token_scores`` asks for one generated token with ``top_logprobs``
    and reads the candidates off that distribution. ``loglikelihood`` needs a
    legacy ``/completions`` endpoint that echoes prompt logprobs (vLLM and
    similar servers do); enable it with ``echo_logprobs=True``. Pure chat APIs
    raise :class:`CapabilityNotSupported` instead of approximating.
    """

    name = "openai_compatible"

    def __init__(
        self,
        model: str,
        base_url: str = DEFAULT_BASE_URL,
        api_key: str | None = None,
        *,
        timeout: float = 60.0,
        logprobs: bool = True,
        top_logprobs: int = 20,
        echo_logprobs: bool = False,
        client: httpx.Client | None = None,
        **kwargs,
    ):
        super().__init__(**kwargs)
        if not model:
            raise ValueError("model name is required")
        self.model = model
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key or os.environ.get(API_KEY_ENV)
        self.top_logprobs = int(top_logprobs)
        self._caps = BackendCapabilities(
            supports_generate=True,
            supports_loglikelihood=bool(echo_logprobs),
            supports_logits=bool(logprobs),
        )
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        self._client = client or httpx.Client(timeout=timeout)
        self._headers = headers

    @classmethod
    def from_args(cls, args: Mapping[str, Any], **kwargs) -> "OpenAICompatibleBackend":
        """Build from ``--model_args`` key-values (``model=...,api_key=...``)."""
        args = dict(args)
        model = args.pop("model", None) or args.pop("model_name", None)
        if not model:
            raise ValueError("model_args must include model=<name>")
        for key in ("logprobs", "echo_logprobs"):
            if key in args:
                args[key] = _truthy(args[key])
        for key in ("timeout",):
            if key in args:
                args[key] = float(args[key])
        for key in ("top_logprobs", "max_in_flight"):
            if key in args:
                args[key] = int(args[key])
        return cls(model, **args, **kwargs)

    @property
    def capabilities(self) -> BackendCapabilities:
        return self._caps

    def describe(self) -> dict[str, Any]:
        return {"backend": self.name, "model": self.model, "base_url": self.base_url}

    def close(self) -> None:
        self._client.close()

    # -- wire ------------------------------------------------------------

    def _post(self, path: str, body: dict[str, Any]) -> dict[str, Any]:
        url = f"{self.base_url}/{path}"
        try:
            resp = self._client.post(url, json=body, headers=self._headers)
        except httpx.TimeoutException as e:
            raise TransportError(f"timeout calling {url}: {e}", transient=True) from e
        except httpx.TransportError as e:
            raise TransportError(f"network error calling {url}: {e}", transient=True) from e
        if resp.status_code >= 400:
            transient = resp.status_code == 429 or resp.status_code >= 500
            raise TransportError(
                f"HTTP {resp.status_code} from {url}: {resp.text[:300]}",
                transient=transient,
                status=resp.status_code,
            )
        try:
            data = resp.json()
        except (json.JSONDecodeError, ValueError) as e:
            raise MalformedResponse(f"non-JSON body from {url}") from e
        if not isinstance(data, dict):
            raise MalformedResponse(f"unexpected JSON body from {url}")
        return data

    @staticmethod
    def _wire_messages(messages: list[ChatMessage]) -> list[dict[str, str]]:
        return [m.to_dict() for m in strip_markers(messages)]

    @staticmethod
    def _first_choice(data: dict[str, Any]) -> dict[str, Any]:
        try:
            choice = data["choices"][0]
        except (KeyError, IndexError, TypeError):
            raise MalformedResponse("response has no choices") from None
        if not isinstance(choice, dict):
            raise MalformedResponse("choice is not an object")
        return choice

    @staticmethod
    def _usage(data: dict[str, Any]) -> tuple[int, int]:
        usage = data.get("usage") or {}
        return int(usage.get("prompt_tokens") or 0), int(usage.get("completion_tokens") or 0)

    # -- hooks -----------------------------------------------------------

    def _generate(self, messages: list[ChatMessage], opts: GenerationOptions) -> GenerationResult:
        body: dict[str, Any] = {
            "model": self.model,
            "messages": self._wire_messages(messages),
            "temperature": opts.temperature,
            "max_tokens": opts.max_new_tokens,
        }
        if opts.stop_sequences:
            body["stop"] = list(opts.stop_sequences)
        body.update(opts.extra)
        data = self._post("chat/completions", body)
        choice = self._first_choice(data)
        content = (choice.get("message") or {}).get("content")
        if not isinstance(content, str):
            raise MalformedResponse("choice has no message content")
        prompt_tokens, completion_tokens = self._usage(data)
        return GenerationResult(text=content, prompt_tokens=prompt_tokens, generated_tokens=completion_tokens)

    def _next_token_scores(
        self, messages: list[ChatMessage], tokens: list[str], require_single_token: bool
    ) -> tuple[list[TokenScore], int]:
        firsts = []
        for tok in tokens:
            pieces = tok.split()
            if not pieces:
                raise TokenResolutionError(f"candidate {tok!r} maps to zero tokens")
            if require_single_token and len(pieces) > 1:
                raise TokenResolutionError(f"candidate {tok!r} is not a single token")
            firsts.append(pieces[0])

        body = {
            "model": self.model,
            "messages": self._wire_messages(messages),
            "temperature": 0,
            "max_tokens": 1,
            "logprobs": True,
            "top_logprobs": self.top_logprobs,
        }
        data = self._post("chat/completions", body)
        choice = self._first_choice(data)
        logprobs = choice.get("logprobs")
        if not logprobs:
            raise CapabilityNotSupported(f"{self.base_url} returned no logprobs for model {self.model}")
        try:
            top = logprobs["content"][0]["top_logprobs"]
            returned = [(str(e["token"]).strip(), float(e["logprob"])) for e in top]
        except (KeyError, IndexError, TypeError, ValueError) as e:
            raise MalformedResponse(f"malformed logprobs block: {e}") from e
        if not returned:
            raise MalformedResponse("empty top_logprobs")

        best: dict[str, float] = {}
        for text, lp in returned:
            if text not in best or lp > best[text]:
                best[text] = lp
        floor = min(lp for _, lp in returned) - MISSING_TOKEN_GAP
        scores = [TokenScore(tok, best.get(first, floor), is_logprob=True) for tok, first in zip(tokens, firsts)]
        return scores, self._usage(data)[0]

    def _loglikelihood(self, messages: list[ChatMessage], target: str) -> LoglikelihoodResult:
        # Token logprobs for the prompt are echoed back; the target's share is
        # every token starting at or after the context boundary.
        context = "\n\n".join(m.content for m in strip_markers(messages)) + "\n"
        body = {
            "model": self.model,
            "prompt": context + target,
            "max_tokens": 1,
            "temperature": 0,
            "echo": True,
            "logprobs": 0,
        }
        data = self._post("completions", body)
        choice = self._first_choice(data)
        try:
            lp = choice["logprobs"]
            offsets = lp["text_offset"]
            token_logprobs = lp["token_logprobs"]
        except (KeyError, TypeError):
            raise MalformedResponse("completion lacks echoed logprobs") from None
        end = len(context) + len(target)
        total, count = 0.0, 0
        for off, val in zip(offsets, token_logprobs):
            if len(context) <= off < end and val is not None:
                total += float(val)
                count += 1
        if count == 0:
            raise MalformedResponse("no target tokens found in echoed logprobs")
        return LoglikelihoodResult(
            total_logprob=min(total, 0.0), target_token_count=count, prompt_tokens=self._usage(data)[0]
        )
