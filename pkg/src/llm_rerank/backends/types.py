from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Literal, Mapping, Union

from llm_rerank.tracing import TraceRecord

Role = Literal["system", "user", "assistant"]
ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}; expected one of {ROLES}")
        if not isinstance(self.content, str):
            raise TypeError("message content must be str")

    def to_dict(self) -> dict[str, str]:
        return {"role": self.role, "content": self.content}


MessageLike = Union[ChatMessage, Mapping[str, str]]


def as_messages(messages: Iterable[MessageLike]) -> list[ChatMessage]:
    """Coerce dicts like ``{"role": "user", "content": ...}`` to ChatMessage."""
    out = []
    for m in messages:
        if isinstance(m, ChatMessage):
            out.append(m)
        else:
            out.append(ChatMessage(role=m["role"], content=m["content"]))
    return out


@dataclass
class GenerationOptions:
    temperature: float = 0.0
    max_new_tokens: int = 512
    stop_sequences: list[str] = field(default_factory=list)
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.temperature) or self.temperature < 0:
            raise ValueError(f"temperature must be finite and >= 0, got {self.temperature}")
        if int(self.max_new_tokens) < 1:
            raise ValueError(f"max_new_tokens must be >= 1, got {self.max_new_tokens}")

    @classmethod
    def from_args(cls, args: Mapping[str, Any] | None) -> "GenerationOptions":
        """Build options from ``--model_fw_args`` style key-values.

        Known keys map onto fields (``max_tokens`` is accepted as an alias of
        ``max_new_tokens``); everything else goes to ``extra`` untouched.
        """
        args = dict(args or {})
        kw: dict[str, Any] = {}
        if "temperature" in args:
            kw["temperature"] = float(args.pop("temperature"))
        for key in ("max_new_tokens", "max_tokens"):
            if key in args:
                kw["max_new_tokens"] = int(args.pop(key))
        for key in ("stop", "stop_sequences"):
            if key in args:
                stop = args.pop(key)
                kw["stop_sequences"] = [stop] if isinstance(stop, str) else list(stop)
        return cls(**kw, extra=args)


@dataclass
class GenerationResult:
    text: str
    prompt_tokens: int = 0
    generated_tokens: int = 0
    latency: float = 0.0  # milliseconds
    attempts: int = 1
    trace: TraceRecord | None = field(default=None, compare=False, repr=False)


@dataclass
class LoglikelihoodResult:
    total_logprob: float
    target_token_count: int
    prompt_tokens: int = 0
    latency: float = 0.0
    attempts: int = 1

    def __post_init__(self):
        if not math.isfinite(self.total_logprob):
            raise ValueError("total_logprob must be finite")
        if self.total_logprob > 0:
            raise ValueError(f"log-probability must be <= 0, got {self.total_logprob}")
        if self.target_token_count < 1:
            raise ValueError("target_token_count must be >= 1")

    @property
    def mean_logprob(self) -> float:
        return self.total_logprob / self.target_token_count


@dataclass
class TokenScore:
    token_text: str
    value: float
    is_logprob: bool

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"non-finite score for token {self.token_text!r}")


@dataclass(frozen=True)
class BackendCapabilities:
    supports_generate: bool = True
    supports_loglikelihood: bool = False
    supports_logits: bool = False
