"""``k=v,k=v`` flag parsing shared by the CLI and the library facade."""

from __future__ import annotations

import json
from typing import Any


def _split_top_level(text: str) -> list[str]:
    parts, depth, buf = [], 0, []
    for ch in text:
        if ch in "[{(":
            depth += 1
        elif ch in "]})":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    parts.append("".join(buf))
    return [p for p in parts if p.strip()]


def coerce_value(raw: str) -> Any:
    """Interpret a flag value: JSON scalars and lists, else the plain string."""
    text = raw.strip()
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    if text.lower() in ("none", "null"):
        return None
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_kv(text: str | None) -> dict[str, Any]:
    """Parse ``"window_size=20,step=10"`` into ``{"window_size": 20, "step": 10}``.

    Brackets protect commas, so ``stage_sizes=[100,50,20]`` stays one value.
    """
    if not text:
        return {}
    out: dict[str, Any] = {}
    for part in _split_top_level(text):
        if "=" not in part:
            raise ValueError(f"expected key=value, got {part!r}")
        key, value = part.split("=", 1)
        key = key.strip()
        if not key:
            raise ValueError(f"empty key in {part!r}")
        out[key] = coerce_value(value)
    return out
