"""Approach registry and the high-level reranking facade."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Callable, Mapping, Sequence

from llm_rerank.backends import Backend, GenerationOptions, load_backend
from llm_rerank.errors import ConfigError
from llm_rerank.models import (
    FineGrainedRelevance,
    FirstListwise,
    ListwiseGeneration,
    PairwiseComparison,
    QueryGeneration,
    RelevanceGeneration,
    TournamentSelection,
)
from llm_rerank.ranking import (
    Candidate,
    Paradigm,
    Ranking,
    SlidingWindowConfig,
    TournamentConfig,
    identity_rerank,
    listwise_sliding_window,
    make_candidates,
    pairwise_heapsort,
    pointwise_rerank,
    tournament_rerank,
)
from llm_rerank.tracing import trace_scope

logger = logging.getLogger(__name__)

RankFn = Callable[[str, Sequence[Candidate]], Ranking]

_TEMPLATE_ARGS = {"template": None, "template_dir": None}


@dataclass(frozen=True)
class Approach:
    name: str
    paradigm: Paradigm
    build: Callable[[Backend, dict[str, Any], GenerationOptions], RankFn]
    defaults: dict[str, Any] = field(default_factory=dict)


def _model_kwargs(args: Mapping[str, Any], opts: GenerationOptions) -> dict[str, Any]:
    return {"template": args["template"], "template_dir": args["template_dir"], "gen_opts": opts}


def _build_pointwise(model_cls, extra: Sequence[str] = ()):
    def build(backend: Backend, args: dict[str, Any], opts: GenerationOptions) -> RankFn:
        model = model_cls(backend, **{k: args[k] for k in extra}, **_model_kwargs(args, opts))
        return partial(pointwise_rerank, score_fn=model, max_workers=args["parallel"])

    return build


def _build_listwise(model_cls):
    def build(backend: Backend, args: dict[str, Any], opts: GenerationOptions) -> RankFn:
        cfg = SlidingWindowConfig(args["window_size"], args["step"])
        model = model_cls(backend, max_window=cfg.window_size, max_words=args["max_words"], **_model_kwargs(args, opts))
        return partial(listwise_sliding_window, window_fn=model, cfg=cfg)

    return build


def _build_prp(backend: Backend, args: dict[str, Any], opts: GenerationOptions) -> RankFn:
    model = PairwiseComparison(backend, both_orders=args["both_orders"], **_model_kwargs(args, opts))
    return partial(pairwise_heapsort, compare_fn=model, k=args["k"])


def _build_tourrank(backend: Backend, args: dict[str, Any], opts: GenerationOptions) -> RankFn:
    cfg = TournamentConfig(tuple(args["stage_sizes"]), args["rounds"], args["group_size"])
    model = TournamentSelection(backend, max_words=args["max_words"], **_model_kwargs(args, opts))
    return partial(tournament_rerank, select_fn=model, cfg=cfg, max_workers=args["parallel"])


def _build_identity(backend: Backend, args: dict[str, Any], opts: GenerationOptions) -> RankFn:
    return identity_rerank


APPROACHES: dict[str, Approach] = {}
ALIASES = {"relgen": "relevance-generation", "prp": "prp-heap", "tourrank-1": "tourrank", "bm25": "identity"}


def register_approach(approach: Approach) -> None:
    APPROACHES[approach.name] = approach


for _a in (
    Approach(
        "rankgpt",
        Paradigm.LISTWISE_SLIDING_WINDOW,
        _build_listwise(ListwiseGeneration),
        {"window_size": 20, "step": 10, "max_words": None, **_TEMPLATE_ARGS},
    ),
    Approach(
        "first",
        Paradigm.LISTWISE_SLIDING_WINDOW,
        _build_listwise(FirstListwise),
        {"window_size": 20, "step": 10, "max_words": None, **_TEMPLATE_ARGS},
    ),
    Approach(
        "relevance-generation",
        Paradigm.POINTWISE,
        _build_pointwise(RelevanceGeneration, ["score"]),
        {"score": "yes-no", "parallel": 1, **_TEMPLATE_ARGS},
    ),
    Approach(
        "query-generation",
        Paradigm.POINTWISE,
        _build_pointwise(QueryGeneration),
        {"parallel": 1, **_TEMPLATE_ARGS},
    ),
    Approach(
        "fine-grained-relevance",
        Paradigm.POINTWISE,
        _build_pointwise(FineGrainedRelevance, ["route"]),
        {"route": "auto", "parallel": 1, **_TEMPLATE_ARGS},
    ),
    Approach(
        "prp-heap",
        Paradigm.PAIRWISE_HEAPSORT,
        _build_prp,
        {"k": None, "both_orders": True, **_TEMPLATE_ARGS},
    ),
    Approach(
        "tourrank",
        Paradigm.TOURNAMENT,
        _build_tourrank,
        {"stage_sizes": [100, 50, 20, 10, 5, 2], "rounds": 1, "group_size": 20, "max_words": None, "parallel": 1,
         **_TEMPLATE_ARGS},
    ),
    Approach("identity", Paradigm.IDENTITY, _build_identity),
):
    register_approach(_a)


def get_approach(name: str) -> Approach:
    key = ALIASES.get(name, name)
    try:
        return APPROACHES[key]
    except KeyError:
        raise ConfigError(
            f"unknown reranking approach {name!r}; registered approaches: {', '.join(sorted(APPROACHES))}"
        ) from None


def resolve_args(approach: str, args: Mapping[str, Any] | None = None) -> dict[str, Any]:
    """Merge user ``reranking_args`` over the approach defaults.

    Unknown keys are a :class:`ConfigError`, so typos cannot silently fall
    back to defaults.
    """
    spec = get_approach(approach)
    args = dict(args or {})
    unknown = set(args) - set(spec.defaults)
    if unknown:
        raise ConfigError(
            f"unknown reranking_args {sorted(unknown)} for {spec.name}; accepted: {sorted(spec.defaults)}"
        )
    return {**spec.defaults, **args}


def build_ranker(
    approach: str,
    backend: Backend,
    args: Mapping[str, Any] | None = None,
    gen_opts: GenerationOptions | None = None,
) -> RankFn:
    spec = get_approach(approach)
    resolved = resolve_args(approach, args)
    try:
        return spec.build(backend, resolved, gen_opts or GenerationOptions())
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad reranking_args for {spec.name}: {e}") from e


def rerank(
    query: str,
    candidates: Sequence[Any],
    approach: str,
    model: Backend,
    config: Mapping[str, Any] | None = None,
    gen_opts: GenerationOptions | None = None,
    query_id: str = "",
) -> Ranking:
    """Rerank ``candidates`` for ``query`` with a registered approach."""
    ranker = build_ranker(approach, model, config, gen_opts)
    cands = make_candidates(candidates)
    model.bind_query(query_id, query, cands)
    with trace_scope(query_id=query_id, paradigm=get_approach(approach).paradigm.value):
        return ranker(query, cands)


class Reranker:
    """One-stop object: pick an approach and a model, then call :meth:`rerank`.

    >>> from llm_rerank.backends import MockBackend
    >>> backend = MockBackend({"q": {"doc0": 0.1, "doc1": 0.9, "doc2": 0.5}})
    >>> Reranker("rankgpt", backend=backend).rerank("q", ["doc0", "doc1", "doc2"])
    ['doc1', 'doc2', 'doc0']
    """

    def __init__(
        self,
        reranking_approach: str,
        model_type: str = "openai",
        model_name: str | None = None,
        model_args: Mapping[str, Any] | None = None,
        model_fw_args: Mapping[str, Any] | None = None,
        reranking_args: Mapping[str, Any] | None = None,
        backend: Backend | None = None,
    ):
        if backend is None:
            args = dict(model_args or {})
            if model_name is not None:
                args.setdefault("model", model_name)
            backend = load_backend(model_type, args)
        self.approach = get_approach(reranking_approach).name
        self.backend = backend
        self.gen_opts = GenerationOptions.from_args(model_fw_args)
        self.reranking_args = resolve_args(self.approach, reranking_args)
        self._ranker = build_ranker(self.approach, backend, reranking_args, self.gen_opts)

    def rank(self, query: str, candidates: Sequence[Any], query_id: str = "") -> Ranking:
        cands = make_candidates(candidates)
        self.backend.bind_query(query_id, query, cands)
        with trace_scope(query_id=query_id, paradigm=get_approach(self.approach).paradigm.value):
            return self._ranker(query, cands)

    def rerank(self, query: str, candidates: Sequence[Any], query_id: str = "") -> list[Any]:
        """Return ``candidates`` reordered, most relevant first."""
        return self.rank(query, candidates, query_id).apply(list(candidates))
