"""Concrete relevance models plugged into the ranking drivers."""

from llm_rerank.models.listwise import FirstListwise, ListwiseGeneration, TournamentSelection, render_items
from llm_rerank.models.pairwise import PairwiseComparison
from llm_rerank.models.parsing import (
    ParsedPermutation,
    extract_identifiers,
    format_permutation,
    parse_permutation,
    parse_selection,
)
from llm_rerank.models.pointwise import (
    EnsemblePointwise,
    FineGrainedRelevance,
    LabelSet,
    QueryGeneration,
    RelevanceGeneration,
    expected_gain,
)
from llm_rerank.models.templates import PromptTemplate, builtin_templates, load_template, parse_template

__all__ = [
    "EnsemblePointwise",
    "FineGrainedRelevance",
    "FirstListwise",
    "LabelSet",
    "ListwiseGeneration",
    "PairwiseComparison",
    "ParsedPermutation",
    "PromptTemplate",
    "QueryGeneration",
    "RelevanceGeneration",
    "TournamentSelection",
    "builtin_templates",
    "expected_gain",
    "extract_identifiers",
    "format_permutation",
    "load_template",
    "parse_permutation",
    "parse_selection",
    "parse_template",
    "render_items",
]
