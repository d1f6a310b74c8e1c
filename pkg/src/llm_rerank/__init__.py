"""Rerank retrieved documents with large language models.

Pointwise, pairwise, listwise and tournament approaches share one backend
interface, and an evaluation harness scores runs against TREC qrels.
"""

from llm_rerank.backends import MockBackend, OpenAICompatibleBackend, load_backend
from llm_rerank.evaluation.evaluator import EvalConfig, simple_evaluate
from llm_rerank.ranking import Candidate, Ranking
from llm_rerank.reranker import APPROACHES, Reranker, rerank

__version__ = "0.1.0"

__all__ = [
    "APPROACHES",
    "Candidate",
    "EvalConfig",
    "MockBackend",
    "OpenAICompatibleBackend",
    "Ranking",
    "Reranker",
    "load_backend",
    "rerank",
    "simple_evaluate",
]
