import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from llm_rerank.errors import SelectionSizeError
from llm_rerank.ranking import (
    Candidate,
    Comparison,
    Ranking,
    SlidingWindowConfig,
    TournamentConfig,
    identity_rerank,
    listwise_sliding_window,
    make_candidates,
    pairwise_heapsort,
    pointwise_rerank,
    repair_selection,
    tournament_rerank,
    window_starts,
)
from oracles import oracle_order, sliding_window_calls


def cands(n):
    return [Candidate(f"d{i}", f"doc{i}", i + 1) for i in range(n)]


class Oracle:
    """Perfect model functions over a hidden score per document text."""

    def __init__(self, scores):
        self.scores = {f"doc{i}": s for i, s in enumerate(scores)}
        self.calls = 0

    def score(self, query, doc):
        self.calls += 1
        return self.scores[doc]

    def compare(self, query, a, b):
        self.calls += 1
        sa, sb = self.scores[a], self.scores[b]
        return Comparison.A_WINS if sa > sb else Comparison.B_WINS if sb > sa else Comparison.TIE

    def _sort(self, docs):
        return sorted(range(len(docs)), key=lambda i: (-self.scores[docs[i]], i))

    def window(self, query, docs):
        self.calls += 1
        return self._sort(docs)

    def select(self, query, docs, m):
        self.calls += 1
        return self._sort(docs)[:m]


def distinct_scores(n, seed):
    rng = random.Random(seed)
    return rng.sample(range(10 * n + 10), n)


# -- types ------------------------------------------------------------------


def test_ranking_must_be_permutation():
    with pytest.raises(ValueError):
        Ranking([0, 0], "pointwise")
    with pytest.raises(ValueError):
        Ranking([0, 1], "pointwise", scores=[1.0])


def test_candidate_needs_id():
    with pytest.raises(ValueError):
        Candidate("", "x", 1)


def test_make_candidates_forms():
    out = make_candidates(["a", ("x", "b"), {"doc_id": "y", "content": "c", "score": 2}])
    assert [c.doc_id for c in out] == ["doc0", "x", "y"]
    assert [c.initial_rank for c in out] == [1, 2, 3]
    assert out[2].initial_score == 2.0


def test_configs_validate():
    with pytest.raises(ValueError):
        SlidingWindowConfig(10, 11)
    with pytest.raises(ValueError):
        SlidingWindowConfig(10, 0)
    with pytest.raises(ValueError):
        TournamentConfig(stage_sizes=(10, 10, 5))
    with pytest.raises(ValueError):
        TournamentConfig(rounds=0)
    assert TournamentConfig().resolve(30) == [30, 20, 10, 5, 2]


# -- pointwise --------------------------------------------------------------


def test_pointwise_example():
    o = Oracle([0.1, 0.9, 0.5])
    r = pointwise_rerank("q", cands(3), o.score)
    assert r.order == [1, 2, 0]
    assert r.scores == [0.9, 0.5, 0.1]
    assert o.calls == 3


def test_pointwise_ties_keep_input_order():
    assert pointwise_rerank("q", cands(5), lambda q, d: 1.0).order == [0, 1, 2, 3, 4]


def test_pointwise_matches_sort_oracle():
    scores = [random.Random(1).random() for _ in range(100)]
    scores = [random.Random(i).random() for i in range(100)]
    o = Oracle(scores)
    r = pointwise_rerank("q", cands(100), o.score)
    assert r.order == oracle_order(scores)
    assert o.calls == 100 == r.stats["model_calls"]


def test_pointwise_error_names_document():
    def bad(q, d):
        if d == "doc2":
            raise KeyError("nope")
        return 0.0

    with pytest.raises(KeyError) as info:
        pointwise_rerank("q", cands(4), bad)
    assert any("d2" in n for n in info.value.__notes__)


def test_pointwise_parallel_same_result():
    scores = distinct_scores(40, 2)
    assert pointwise_rerank("q", cands(40), Oracle(scores).score, max_workers=4).order == oracle_order(scores)


@pytest.mark.parametrize("n", [0, 1])
def test_degenerate_inputs_make_no_calls(n):
    o = Oracle([1.0] * n)
    for r in (
        pointwise_rerank("q", cands(n), o.score),
        pairwise_heapsort("q", cands(n), o.compare),
        listwise_sliding_window("q", cands(n), o.window),
        tournament_rerank("q", cands(n), o.select),
    ):
        assert r.order == list(range(n))
    assert o.calls == 0


# -- pairwise heapsort ------------------------------------------------------


def test_heapsort_example():
    assert pairwise_heapsort("q", cands(3), Oracle([3, 1, 2]).compare, k=3).order == [0, 2, 1]


def test_heapsort_all_ties_is_identity():
    r = pairwise_heapsort("q", cands(7), lambda q, a, b: Comparison.TIE)
    assert r.order == list(range(7))


def test_heapsort_top10_of_50():
    scores = distinct_scores(50, 5)
    r = pairwise_heapsort("q", cands(50), Oracle(scores).compare, k=10)
    assert r.order[:10] == oracle_order(scores)[:10]
    assert r.order[10:] == sorted(r.order[10:])
    assert r.stats["k"] == 10


def test_heapsort_error_names_pair():
    with pytest.raises(RuntimeError) as info:
        pairwise_heapsort("q", cands(3), lambda q, a, b: (_ for _ in ()).throw(RuntimeError("x")))
    assert "doc_ids" in info.value.__notes__[0]


def test_heapsort_k_clamped_and_validated():
    assert pairwise_heapsort("q", cands(4), Oracle([1, 2, 3, 4]).compare, k=10).order == [3, 2, 1, 0]
    with pytest.raises(ValueError):
        pairwise_heapsort("q", cands(4), Oracle([1, 2, 3, 4]).compare, k=0)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 60), st.integers(0, 10_000), st.integers(1, 60))
def test_heapsort_comparison_bound_and_oracle(n, seed, k):
    k = min(k, n)
    scores = distinct_scores(n, seed)
    o = Oracle(scores)
    r = pairwise_heapsort("q", cands(n), o.compare, k=k)
    assert r.order[:k] == oracle_order(scores)[:k]
    assert r.stats["comparisons"] == o.calls
    assert o.calls <= 4 * n * math.ceil(math.log2(n))


# -- sliding window ---------------------------------------------------------


def test_window_starts_examples():
    assert window_starts(100, 20, 10) == [80, 70, 60, 50, 40, 30, 20, 10, 0]
    assert window_starts(10, 20, 10) == [0]
    assert window_starts(25, 20, 10) == [5, 0]


def test_sliding_window_calls_and_top10():
    scores = distinct_scores(100, 11)
    o = Oracle(scores)
    r = listwise_sliding_window("q", cands(100), o.window, SlidingWindowConfig(20, 10))
    assert o.calls == 9 == r.stats["model_calls"]
    assert r.order[:10] == oracle_order(scores)[:10]


def test_sliding_window_single_window():
    o = Oracle(distinct_scores(10, 3))
    listwise_sliding_window("q", cands(10), o.window, SlidingWindowConfig(20, 10))
    assert o.calls == 1


def test_sliding_window_rejects_bad_window_output():
    with pytest.raises(ValueError) as info:
        listwise_sliding_window("q", cands(30), lambda q, d: [0] * len(d))
    assert "position 10" in info.value.__notes__[0]


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 120), st.integers(1, 25), st.integers(1, 25), st.integers(0, 1000))
def test_sliding_window_call_count_and_carry(n, w, s, seed):
    s = min(s, w)
    scores = distinct_scores(n, seed)
    o = Oracle(scores)
    r = listwise_sliding_window("q", cands(n), o.window, SlidingWindowConfig(w, s))
    expected = 1 if n <= w else math.ceil((n - w) / s) + 1
    assert expected == sliding_window_calls(n, w, s)
    # a single candidate needs no model call at all
    assert o.calls == (expected if n > 1 else 0)
    carry = w - s if n > w else n
    assert r.order[:carry] == oracle_order(scores)[:carry]


# -- tournament -------------------------------------------------------------


def test_tournament_four_docs():
    scores = [4, 3, 2, 1]
    r = tournament_rerank("q", cands(4), Oracle(scores).select, TournamentConfig((4, 2, 1)))
    assert r.order == [0, 1, 2, 3]
    assert r.stats["points"] == [3, 2, 1, 1]


def test_tournament_rounds_scale_points():
    scores = distinct_scores(30, 4)
    order = sorted(range(30), key=lambda i: -scores[i])
    cs = [Candidate(f"d{i}", f"doc{i}", pos + 1) for pos, i in enumerate(order)]
    one = tournament_rerank("q", cs, Oracle(scores).select, TournamentConfig((30, 10, 5, 2), rounds=1))
    two = tournament_rerank("q", cs, Oracle(scores).select, TournamentConfig((30, 10, 5, 2), rounds=2))
    assert one.order == two.order
    assert max(two.stats["points"]) == 2 * max(one.stats["points"])


def test_tournament_presorted_stage_sets():
    scores = sorted(distinct_scores(100, 9), reverse=True)
    o = Oracle(scores)
    r = tournament_rerank("q", cands(100), o.select, TournamentConfig())
    for size in (100, 50, 20, 10, 5, 2):
        assert set(r.order[:size]) == set(range(size))
    # 100 -> 50 uses 5 groups, later stages fit in one group each
    assert r.stats["model_calls"] == o.calls == 5 + 3 + 1 + 1 + 1


def test_tournament_groups_are_round_robin():
    seen = []

    def spy(query, docs, m):
        seen.append((list(docs), m))
        return list(range(m))

    tournament_rerank("q", cands(10), spy, TournamentConfig((10, 4), group_size=5))
    assert seen == [
        (["doc0", "doc2", "doc4", "doc6", "doc8"], 2),
        (["doc1", "doc3", "doc5", "doc7", "doc9"], 2),
    ]


def test_tournament_quota_split_uneven():
    seen = []

    def spy(query, docs, m):
        seen.append((len(docs), m))
        return list(range(m))

    tournament_rerank("q", cands(45), spy, TournamentConfig((45, 22), group_size=20))
    assert seen == [(15, 8), (15, 7), (15, 7)]


def test_tournament_repairs_sloppy_selection():
    r = tournament_rerank("q", cands(6), lambda q, d, m: [99, 1, 1], TournamentConfig((6, 3)))
    assert sorted(r.order) == list(range(6))


def test_tournament_strict_raises():
    with pytest.raises(SelectionSizeError):
        tournament_rerank("q", cands(6), lambda q, d, m: [0], TournamentConfig((6, 3)), strict=True)


def test_repair_selection_rules():
    assert repair_selection([2, 2, 7, -1], 4, 3) == [2, 0, 1]
    assert repair_selection([3, 1, 0, 2], 4, 2) == [3, 1]
    with pytest.raises(SelectionSizeError):
        repair_selection([0, 0], 4, 2, strict=True)
    with pytest.raises(SelectionSizeError):
        repair_selection(None, 4, 2)


# -- properties across drivers ------------------------------------------------

DRIVERS = {
    "pointwise": lambda cs, o: pointwise_rerank("q", cs, o.score),
    "heap": lambda cs, o: pairwise_heapsort("q", cs, o.compare, k=5),
    "window": lambda cs, o: listwise_sliding_window("q", cs, o.window, SlidingWindowConfig(6, 3)),
    "tournament": lambda cs, o: tournament_rerank("q", cs, o.select, TournamentConfig((40, 20, 8, 3), group_size=6)),
    "identity": lambda cs, o: identity_rerank("q", cs),
}


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 40), st.lists(st.integers(-5, 5), min_size=40, max_size=40), st.sampled_from(sorted(DRIVERS)))
def test_every_driver_returns_a_permutation(n, raw, driver):
    # small integer range forces plenty of ties
    o = Oracle(raw[:n])
    r = DRIVERS[driver](cands(n), o)
    assert sorted(r.order) == list(range(n))
    again = DRIVERS[driver](cands(n), Oracle(raw[:n]))
    assert again.order == r.order


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 40), st.integers(0, 10_000), st.sampled_from(sorted(DRIVERS)))
def test_monotone_transform_invariance(n, seed, driver):
    scores = distinct_scores(n, seed)
    base = DRIVERS[driver](cands(n), Oracle(scores)).order
    for transform in (lambda x: 3 * x + 7, lambda x: math.exp(x / 50), lambda x: x**3):
        assert DRIVERS[driver](cands(n), Oracle([transform(s) for s in scores])).order == base
