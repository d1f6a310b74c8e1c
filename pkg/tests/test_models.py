import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from llm_rerank.backends import MockBackend, strip_markers
from llm_rerank.errors import CapabilityNotSupported, TokenResolutionError
from llm_rerank.models import (
    EnsemblePointwise,
    FineGrainedRelevance,
    FirstListwise,
    LabelSet,
    ListwiseGeneration,
    PairwiseComparison,
    QueryGeneration,
    RelevanceGeneration,
    TournamentSelection,
    builtin_templates,
    expected_gain,
    load_template,
    parse_template,
)
from llm_rerank.ranking import Comparison
from llm_rerank.tracing import TraceSink, trace_scope

HIDDEN = {"q": {"d1": 0.8, "d2": 0.3, "d3": 1.5, "d4": 2.0, "d5": -0.4}}


def oracle(**kwargs):
    return MockBackend(HIDDEN, **kwargs)


# -- templates --------------------------------------------------------------


def test_builtin_templates_parse():
    names = builtin_templates()
    assert {"rankgpt", "first", "relevance_generation", "query_generation", "fine_grained", "prp", "tourrank"} <= set(names)
    for name in names:
        t = load_template(name)
        assert t.version.startswith(name + "@")


def test_template_render_inserts_payload_after_intent():
    t = parse_template("[system]\nsys {query}\n[user]\n#intent:pointwise#\nQ: {query}\nD: {doc}", "t")
    msgs = t.render({"query": "q", "doc": "d"}, query="q", doc="d")
    assert msgs[0].content == "sys q"
    lines = msgs[1].content.split("\n")
    assert lines[0] == "#intent:pointwise#"
    assert lines[1].startswith("#payload:")
    assert strip_markers(msgs)[1].content == "Q: q\nD: d"


def test_template_needs_intent_and_placeholders():
    with pytest.raises(ValueError):
        parse_template("[user]\nno intent here {query}", "bad")
    with pytest.raises(ValueError):
        parse_template("[user]\n#intent:mystery#\n{query}", "bad")
    t = parse_template("[user]\n#intent:pointwise#\n{query}", "t")
    with pytest.raises(ValueError):
        t.require("query", "doc")


def test_template_override_from_directory(tmp_path):
    (tmp_path / "mine.txt").write_text("[user]\n#intent:pointwise#\nIs {doc} about {query}? yes or no")
    sink = TraceSink()
    model = RelevanceGeneration(oracle(traces=sink), template="mine", template_dir=tmp_path)
    model("q", "d1")
    assert sink.records()[0].template.startswith("mine@")


def test_unknown_template():
    with pytest.raises(ValueError):
        load_template("does-not-exist")


# -- relevance generation ---------------------------------------------------


def test_relevance_generation_yes_minus_no():
    assert RelevanceGeneration(MockBackend(token_scores={"yes": 2.0, "no": -1.0}))("q", "d") == 3.0
    assert RelevanceGeneration(MockBackend(token_scores={"yes": 0.4, "no": 0.4}))("q", "d") == 0.0
    assert RelevanceGeneration(MockBackend(token_scores={"yes": 2.0, "no": -1.0}), score="yes")("q", "d") == 2.0


def test_relevance_generation_monotone_under_oracle():
    m = RelevanceGeneration(oracle())
    assert m("q", "d1") > m("q", "d2")


def test_relevance_generation_needs_logits():
    with pytest.raises(CapabilityNotSupported):
        RelevanceGeneration(oracle(supports_logits=False))("q", "d1")


# -- query generation -------------------------------------------------------


def test_query_generation_uniform_mean():
    assert QueryGeneration(MockBackend(logprob_per_token=-1.0))("one two three four", "doc") == -1.0


def test_query_generation_scripted_totals():
    backend = MockBackend()
    model = QueryGeneration(backend)
    key_a = backend.context_key(model.template.render({"query": "x y", "doc": "A"}, query="x y", doc="A"))
    key_b = backend.context_key(model.template.render({"query": "x y", "doc": "B"}, query="x y", doc="B"))
    backend.loglikelihood_table.update({(key_a, "x y"): -2.0, (key_b, "x y"): -8.0})
    assert model("x y", "A") == -1.0
    assert model("x y", "A") > model("x y", "B")


def test_query_generation_needs_loglikelihood():
    with pytest.raises(CapabilityNotSupported):
        QueryGeneration(oracle(supports_loglikelihood=False))("q", "d1")


# -- fine-grained -----------------------------------------------------------


def test_expected_gain_examples():
    assert expected_gain([0.0, 0.0, 0.0], [0, 1, 2]) == pytest.approx(1.0)
    assert expected_gain([0.0, 0.0, 60.0], [0, 1, 2]) == pytest.approx(2.0, abs=1e-6)
    assert expected_gain([0.0, math.log(2), math.log(4)], [0, 1, 2]) == pytest.approx(10 / 7, abs=1e-12)


@given(st.lists(st.floats(-50, 50), min_size=3, max_size=3))
def test_expected_gain_within_range(scores):
    assert 0.0 <= expected_gain(scores, [0, 1, 2]) <= 2.0


def test_fine_grained_scripted_logits():
    table = {"Not": 0.0, "Somewhat": math.log(2), "Highly": math.log(4)}
    model = FineGrainedRelevance(MockBackend(token_scores=table))
    assert model.route == "logits"
    assert model("q", "d") == pytest.approx(10 / 7)


def test_fine_grained_loglikelihood_route_orders_like_oracle():
    model = FineGrainedRelevance(oracle(supports_logits=False))
    assert model.route == "loglikelihood"
    assert model("q", "d4") > model("q", "d1") > model("q", "d2")


def test_fine_grained_capability_check():
    with pytest.raises(CapabilityNotSupported):
        FineGrainedRelevance(oracle(supports_logits=False, supports_loglikelihood=False))


def test_label_set_invariants():
    with pytest.raises(ValueError):
        LabelSet((("only", 0),))
    with pytest.raises(ValueError):
        LabelSet((("a", 1), ("b", 1)))
    assert LabelSet().gains == [0.0, 1.0, 2.0]


def test_pointwise_models_agree_under_oracle():
    docs = list(HIDDEN["q"])
    expected = sorted(docs, key=lambda d: -HIDDEN["q"][d])
    for model in (RelevanceGeneration(oracle()), QueryGeneration(oracle()), FineGrainedRelevance(oracle())):
        assert sorted(docs, key=lambda d: -model("q", d)) == expected


# -- pairwise ---------------------------------------------------------------


def test_prp_oracle_both_orders():
    backend = oracle()
    prp = PairwiseComparison(backend)
    assert prp("q", "d4", "d1") is Comparison.A_WINS
    assert prp("q", "d1", "d4") is Comparison.B_WINS
    assert backend.call_counts["next_token_scores"] == 4


def test_prp_contradiction_is_tie():
    # a position-biased judge always prefers whatever is shown first
    prp = PairwiseComparison(MockBackend(token_scores={"A": 1.0, "B": 0.0}))
    assert prp("q", "x", "y") is Comparison.TIE


def test_prp_identical_docs_tie():
    assert PairwiseComparison(oracle())("q", "d1", "d1") is Comparison.TIE


def test_prp_single_order():
    backend = oracle()
    assert PairwiseComparison(backend, both_orders=False)("q", "d2", "d3") is Comparison.B_WINS
    assert backend.call_counts["next_token_scores"] == 1


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_prp_antisymmetric(a1, b1, a2, b2):
    def judge(messages, tokens):
        # distinct logits depending on which doc is shown first
        first = "x" if "Passage A: x" in messages[-1].content else "y"
        return [a1, b1] if first == "x" else [a2, b2]

    prp = PairwiseComparison(MockBackend(token_scores=judge))
    forward, backward = prp("q", "x", "y"), prp("q", "y", "x")
    flip = {Comparison.A_WINS: Comparison.B_WINS, Comparison.B_WINS: Comparison.A_WINS, Comparison.TIE: Comparison.TIE}
    assert backward is flip[forward]


# -- listwise ---------------------------------------------------------------


def test_rankgpt_window_oracle():
    backend = oracle()
    parsed = ListwiseGeneration(backend).rank("q", ["d1", "d2", "d3"])
    assert parsed.raw == "[3] > [1] > [2]"
    assert parsed.indices == [2, 0, 1]
    assert not parsed.repaired


def test_rankgpt_singleton_skips_backend():
    backend = oracle()
    assert ListwiseGeneration(backend)("q", ["d1"]) == [0]
    assert sum(backend.call_counts.values()) == 0


def test_rankgpt_repairs_and_flags_trace():
    sink = TraceSink()
    model = ListwiseGeneration(MockBackend(reply="[2] > [2] > [1]", traces=sink))
    assert model("q", ["a", "b", "c"]) == [1, 0, 2]
    rec = sink.records()[0]
    assert rec.repaired
    assert rec.window == 3


def test_rankgpt_window_limit():
    with pytest.raises(ValueError):
        ListwiseGeneration(oracle(), max_window=2)("q", ["d1", "d2", "d3"])


def test_rankgpt_truncates_passages():
    seen = []
    model = ListwiseGeneration(MockBackend(reply=lambda m: seen.append(m) or "[1] > [2]"), max_words=2)
    model("q", ["one two three four", "five six seven"])
    body = strip_markers(seen[0])[-1].content
    assert "[1] one two\n[2] five six\n" in body


def test_first_scripted_logits():
    model = FirstListwise(MockBackend(token_scores={"1": 0.1, "2": 0.9, "3": 0.5}))
    assert model("q", ["a", "b", "c"]) == [1, 2, 0]
    flat = FirstListwise(MockBackend(token_scores={"1": 0.0, "2": 0.0, "3": 0.0}))
    assert flat("q", ["a", "b", "c"]) == [0, 1, 2]


def test_first_matches_rankgpt_under_oracle():
    docs = ["d1", "d2", "d3", "d4", "d5"]
    assert FirstListwise(oracle())("q", docs) == ListwiseGeneration(oracle())("q", docs)


def test_first_needs_single_token_identifiers():
    def table(messages, tokens):
        return [0.0] * len(tokens)

    with pytest.raises(TokenResolutionError):
        # the mock splits "1 0" style ids, which a real tokenizer might too
        FirstListwise(MockBackend(token_scores=table)).backend.next_token_scores(
            [{"role": "user", "content": "x"}], ["1 0"], require_single_token=True
        )


def test_tourrank_select_oracle():
    backend = oracle()
    chosen = TournamentSelection(backend).select("q", ["d1", "d2", "d3", "d4", "d5"], 2)
    assert {["d1", "d2", "d3", "d4", "d5"][i] for i in chosen.indices} == {"d4", "d3"}


def test_tourrank_select_whole_group_without_call():
    backend = oracle()
    assert TournamentSelection(backend)("q", ["d1", "d2"], 2) == [0, 1]
    assert sum(backend.call_counts.values()) == 0


def test_tourrank_select_shortfall_repaired():
    parsed = TournamentSelection(MockBackend(reply="[3]")).select("q", ["a", "b", "c", "d"], 2)
    assert parsed.indices == [2, 0]
    assert parsed.repaired


# -- ensemble ---------------------------------------------------------------


def test_ensemble_sum():
    relgen = RelevanceGeneration(MockBackend(token_scores={"yes": 2.0, "no": -1.0}))
    qgen = QueryGeneration(MockBackend(logprob_per_token=-1.0))
    assert EnsemblePointwise([relgen, qgen])("a b", "d") == 2.0
    assert EnsemblePointwise([relgen])("q", "d") == 3.0
    assert EnsemblePointwise([relgen, qgen], [2, 0])("q", "d") == 6.0
    with pytest.raises(ValueError):
        EnsemblePointwise([relgen], [1, 2])


def test_model_calls_carry_template_version():
    sink = TraceSink()
    with trace_scope(sink=sink, query_id="q", paradigm="pointwise"):
        model = RelevanceGeneration(oracle())
        model("q", "d1")
    assert sink.records()[0].template == model.template.version
