from __future__ import annotations

from llm_rerank.backends.base import Backend
from llm_rerank.models.base import RankingModel
from llm_rerank.ranking import Comparison


class PairwiseComparison(RankingModel):
    """Pairwise ranking prompting judged by the ``A``/``B`` identifier logits.

    With ``both_orders`` (default) the pair is asked in both orders and only a
    consistent verdict counts; disagreement is a tie.
    """

    default_template = "prp"
    required_fields = ("query", "docA", "docB")

    def __init__(self, backend: Backend, both_orders: bool = True, **kwargs):
        super().__init__(backend, **kwargs)
        self.both_orders = both_orders

    def _first_wins(self, query: str, first: str, second: str) -> Comparison:
        messages = self.template.render(
            {"query": query, "docs": [first, second]}, query=query, docA=first, docB=second
        )
        with self._scope():
            a, b = self.backend.next_token_scores(messages, ["A", "B"])
        if a.value > b.value:
            return Comparison.A_WINS
        if b.value > a.value:
            return Comparison.B_WINS
        return Comparison.TIE

    def __call__(self, query: str, doc_a: str, doc_b: str) -> Comparison:
        forward = self._first_wins(query, doc_a, doc_b)
        if not self.both_orders:
            return forward
        # swapped prompt: identifier A now names doc_b
        backward = self._first_wins(query, doc_b, doc_a)
        backward = {Comparison.A_WINS: Comparison.B_WINS, Comparison.B_WINS: Comparison.A_WINS}.get(
            backward, Comparison.TIE
        )
        return forward if forward is backward else Comparison.TIE
