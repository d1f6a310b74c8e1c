"""Prompt templates stored as plain-text files.

A template file has a ``[system]`` and a ``[user]`` section (the system one
may be empty). Placeholders use ``str.format`` syntax: ``{query}``, ``{doc}``,
``{docA}``, ``{docB}``, ``{num}``, ``{items}``, ``{m}``, ``{labels}``. The
user section starts with an ``#intent:<name>#`` line; at render time a JSON
payload line is inserted after it. Both lines are removed before a real
backend sees the prompt.
"""

from __future__ import annotations

import hashlib
import re
import string
from dataclasses import dataclass
from functools import cached_property, lru_cache
from importlib import resources
from pathlib import Path
from typing import Any

from llm_rerank.backends.base import intent_marker, payload_marker
from llm_rerank.backends.types import ChatMessage

INTENTS = ("pointwise", "pairwise", "listwise", "select")
_SECTION_RE = re.compile(r"^\[(system|user)\]\s*$", re.MULTILINE)
_INTENT_RE = re.compile(r"^#intent:(\w+)#$", re.MULTILINE)


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    system: str
    user: str
    intent: str

    def __post_init__(self):
        if self.intent not in INTENTS:
            raise ValueError(f"template {self.name}: unknown intent {self.intent!r}")
        if not self.user.strip():
            raise ValueError(f"template {self.name}: empty user section")

    @cached_property
    def version(self) -> str:
        digest = hashlib.sha1((self.system + "\0" + self.user).encode("utf-8")).hexdigest()
        return f"{self.name}@{digest[:8]}"

    @cached_property
    def fields(self) -> set[str]:
        names = set()
        for part in (self.system, self.user):
            names.update(f for _, f, _, _ in string.Formatter().parse(part) if f)
        return names

    def require(self, *names: str) -> None:
        missing = set(names) - self.fields
        if missing:
            raise ValueError(f"template {self.name} lacks placeholders {sorted(missing)}")

    def render(self, payload: dict[str, Any], **values: Any) -> list[ChatMessage]:
        user = self.user.format(**values)
        marker = intent_marker(self.intent)
        lines = user.split("\n")
        if marker in lines:
            lines.insert(lines.index(marker) + 1, payload_marker(payload))
        else:
            lines[:0] = [marker, payload_marker(payload)]
        messages = []
        if self.system.strip():
            messages.append(ChatMessage("system", self.system.format(**values)))
        messages.append(ChatMessage("user", "\n".join(lines)))
        return messages


def parse_template(text: str, name: str) -> PromptTemplate:
    parts = _SECTION_RE.split(text)
    sections = {"system": "", "user": ""}
    if len(parts) == 1:
        sections["user"] = text
    else:
        for tag, body in zip(parts[1::2], parts[2::2]):
            sections[tag] = body.strip("\n")
    match = _INTENT_RE.search(sections["user"])
    if not match:
        raise ValueError(f"template {name}: user section needs an #intent:<name># line")
    return PromptTemplate(name, sections["system"], sections["user"], match.group(1))


@lru_cache(maxsize=None)
def _builtin(name: str) -> PromptTemplate:
    path = resources.files("llm_rerank.models").joinpath("templates", f"{name}.txt")
    return parse_template(path.read_text(encoding="utf-8"), name)


def builtin_templates() -> list[str]:
    root = resources.files("llm_rerank.models").joinpath("templates")
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".txt"))


def load_template(spec: str | Path | PromptTemplate, template_dir: str | Path | None = None) -> PromptTemplate:
    """Resolve a template by object, file path, user directory, or built-in name."""
    if isinstance(spec, PromptTemplate):
        return spec
    path = Path(spec)
    if path.suffix == ".txt" and path.is_file():
        return parse_template(path.read_text(encoding="utf-8"), path.stem)
    if template_dir is not None:
        candidate = Path(template_dir) / f"{spec}.txt"
        if candidate.is_file():
            return parse_template(candidate.read_text(encoding="utf-8"), str(spec))
    try:
        return _builtin(str(spec))
    except FileNotFoundError:
        raise ValueError(f"unknown template {spec!r}; built-ins are {builtin_templates()}") from None
