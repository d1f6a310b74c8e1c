from __future__ import annotations

from pathlib import Path

from llm_rerank.backends.base import Backend
from llm_rerank.backends.types import GenerationOptions
from llm_rerank.models.templates import PromptTemplate, load_template
from llm_rerank.tracing import trace_scope


class RankingModel:
    """Shared plumbing for models: backend, prompt template, generation options."""

    default_template = ""
    required_fields: tuple[str, ...] = ()

    def __init__(
        self,
        backend: Backend,
        template: str | Path | PromptTemplate | None = None,
        gen_opts: GenerationOptions | None = None,
        template_dir: str | Path | None = None,
    ):
        self.backend = backend
        self.template = load_template(template or self.default_template, template_dir)
        self.template.require(*self.required_fields)
        self.gen_opts = gen_opts or GenerationOptions(temperature=0.0)

    def _scope(self, window: int | None = None):
        return trace_scope(template=self.template.version, window=window)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(template={self.template.version!r})"
