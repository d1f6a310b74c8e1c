"""Retry transient transport failures with exponential backoff and jitter."""

from __future__ import annotations

import random
import time
from dataclasses import dataclass
from typing import Callable, TypeVar

import tenacity

from llm_rerank.errors import TransportError

T = TypeVar("T")


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_delay: float = 0.5  # seconds
    multiplier: float = 2.0
    jitter: float = 0.2  # +/- fraction of each delay

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.base_delay < 0 or not 0 <= self.jitter < 1:
            raise ValueError("base_delay must be >= 0 and jitter in [0, 1)")

    def delay(self, failed_attempts: int, rng: random.Random | None = None) -> float:
        """Sleep before the next attempt, after ``failed_attempts`` failures."""
        d = self.base_delay * self.multiplier ** (failed_attempts - 1)
        if self.jitter:
            d *= 1 + (rng or random).uniform(-self.jitter, self.jitter)
        return d


def is_transient(exc: BaseException) -> bool:
    return isinstance(exc, TransportError) and exc.transient


def retry_call(
    op: Callable[[], T],
    policy: RetryPolicy,
    sleep: Callable[[float], None] = time.sleep,
    rng: random.Random | None = None,
) -> tuple[T, int]:
    """Run ``op`` under ``policy``; return its value and the attempts used.

    Only transient :class:`TransportError` is retried. Anything else, and the
    last transient error once attempts run out, propagates unchanged.
    """
    # first attempt outside tenacity: the common path pays no retry overhead
    try:
        return op(), 1
    except Exception as e:
        if not is_transient(e) or policy.max_attempts == 1:
            raise
    sleep(policy.delay(1, rng))
    retrying = tenacity.Retrying(
        stop=tenacity.stop_after_attempt(policy.max_attempts - 1),
        wait=lambda state: policy.delay(state.attempt_number + 1, rng),
        retry=tenacity.retry_if_exception(is_transient),
        sleep=sleep,
        reraise=True,
    )
    attempts = 1

    def counted() -> T:
        nonlocal attempts
        attempts += 1
        return op()

    value = retrying(counted)
    return value, attempts


def with_retry(op: Callable[..., T], policy: RetryPolicy | None = None, **kwargs) -> Callable[..., T]:
    """Wrap ``op`` so every call goes through :func:`retry_call`."""
    policy = policy or RetryPolicy()

    def wrapped(*args, **kw) -> T:
        value, _ = retry_call(lambda: op(*args, **kw), policy, **kwargs)
        return value

    return wrapped
