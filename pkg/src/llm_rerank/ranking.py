"""Paradigm drivers: turn a query and candidate list into a permutation.

Drivers know nothing about LLMs. They take plain model functions

* pointwise: ``score_fn(query, doc) -> float``
* pairwise: ``compare_fn(query, doc_a, doc_b) -> Comparison``
* listwise: ``window_fn(query, docs) -> permutation of range(len(docs))``
* tournament: ``select_fn(query, docs, m) -> m indices into docs``

and return a :class:`Ranking`. Ties are always broken toward the smaller
``initial_rank``, i.e. the retriever's order is the prior.
"""

from __future__ import annotations

import contextvars
import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence, TypeVar

from llm_rerank.errors import SelectionSizeError, annotate

T = TypeVar("T")
R = TypeVar("R")


@dataclass(frozen=True)
class Candidate:
    doc_id: str
    content: str
    initial_rank: int
    initial_score: float = 0.0

    def __post_init__(self):
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")


def make_candidates(docs: Iterable[Any]) -> list[Candidate]:
    """Build a candidate list from strings, ``(doc_id, content)`` pairs or dicts.

    Plain strings get ids ``doc0``, ``doc1``, ... in input order.
    """
    out = []
    for i, d in enumerate(docs):
        if isinstance(d, Candidate):
            out.append(d)
        elif isinstance(d, str):
            out.append(Candidate(f"doc{i}", d, i + 1))
        elif isinstance(d, dict):
            out.append(Candidate(str(d["doc_id"]), d.get("content", ""), i + 1, float(d.get("score", 0.0))))
        else:
            doc_id, content = d
            out.append(Candidate(str(doc_id), content, i + 1))
    return out


def check_candidates(candidates: Sequence[Candidate]) -> None:
    ranks = [c.initial_rank for c in candidates]
    if len(set(ranks)) != len(ranks):
        raise ValueError("initial_rank values must be unique within a candidate list")


class Paradigm(str, enum.Enum):
    POINTWISE = "pointwise"
    PAIRWISE_HEAPSORT = "pairwise_heapsort"
    LISTWISE_SLIDING_WINDOW = "listwise_sliding_window"
    TOURNAMENT = "tournament"
    IDENTITY = "identity"


class Comparison(enum.Enum):
    A_WINS = 1
    B_WINS = -1
    TIE = 0


@dataclass
class Ranking:
    order: list[int]
    paradigm: str
    scores: list[float] | None = None
    stats: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if sorted(self.order) != list(range(len(self.order))):
            raise ValueError(f"order is not a permutation: {self.order}")
        if self.scores is not None and len(self.scores) != len(self.order):
            raise ValueError("scores must align with order")

    def apply(self, items: Sequence[T]) -> list[T]:
        return [items[i] for i in self.order]

    def doc_ids(self, candidates: Sequence[Candidate]) -> list[str]:
        return [candidates[i].doc_id for i in self.order]


@dataclass(frozen=True)
class SlidingWindowConfig:
    window_size: int = 20
    step: int = 10

    def __post_init__(self):
        if not 1 <= self.step <= self.window_size:
            raise ValueError(f"need 1 <= step <= window_size, got step={self.step}, window_size={self.window_size}")


@dataclass(frozen=True)
class TournamentConfig:
    stage_sizes: tuple[int, ...] = (100, 50, 20, 10, 5, 2)
    rounds: int = 1
    group_size: int = 20  # max docs per selection prompt

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.stage_sizes)
        object.__setattr__(self, "stage_sizes", sizes)
        if not sizes or sizes[-1] < 1 or any(a <= b for a, b in zip(sizes, sizes[1:])):
            raise ValueError(f"stage_sizes must be strictly decreasing positive integers, got {sizes}")
        if self.rounds < 1 or self.group_size < 1:
            raise ValueError("rounds and group_size must be >= 1")

    def resolve(self, n: int) -> list[int]:
        """Clamp the schedule to ``n`` candidates."""
        first = min(self.stage_sizes[0], n)
        return [first] + [s for s in self.stage_sizes[1:] if s < first]


def _parallel_map(fn: Callable[[T], R], items: Sequence[T], max_workers: int) -> list[R]:
    if max_workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        # each task gets its own copy so trace scopes follow the caller
        futures = [pool.submit(contextvars.copy_context().run, fn, x) for x in items]
        return [f.result() for f in futures]


def _trivial(candidates: Sequence[Candidate], paradigm: Paradigm) -> Ranking | None:
    if len(candidates) <= 1:
        return Ranking(list(range(len(candidates))), paradigm.value, stats={"model_calls": 0})
    return None


def identity_rerank(query: str, candidates: Sequence[Candidate]) -> Ranking:
    """Keep the retrieval order."""
    return Ranking(list(range(len(candidates))), Paradigm.IDENTITY.value, stats={"model_calls": 0})


def pointwise_rerank(
    query: str,
    candidates: Sequence[Candidate],
    score_fn: Callable[[str, str], float],
    max_workers: int = 1,
) -> Ranking:
    trivial = _trivial(candidates, Paradigm.POINTWISE)
    if trivial:
        return trivial
    check_candidates(candidates)

    def score(c: Candidate) -> float:
        try:
            value = float(score_fn(query, c.content))
            if math.isnan(value):
                raise ValueError("score_fn returned NaN")
            return value
        except Exception as e:
            annotate(e, f"while scoring doc_id={c.doc_id}")
            raise

    scores = _parallel_map(score, list(candidates), max_workers)
    order = sorted(range(len(candidates)), key=lambda i: (-scores[i], candidates[i].initial_rank))
    return Ranking(order, Paradigm.POINTWISE.value, [scores[i] for i in order], {"model_calls": len(candidates)})


def _as_comparison(value: Any) -> Comparison:
    if isinstance(value, Comparison):
        return value
    if isinstance(value, (int, float)):
        return Comparison(int(math.copysign(1, value)) if value else 0)
    raise TypeError(f"compare_fn must return a Comparison, got {value!r}")


def pairwise_heapsort(
    query: str,
    candidates: Sequence[Candidate],
    compare_fn: Callable[[str, str, str], Comparison],
    k: int | None = None,
) -> Ranking:
    """Extract the top ``k`` with a max-heap built from pairwise comparisons.

    Positions past ``k`` keep the retrieval order. ``k=None`` sorts fully.
    """
    trivial = _trivial(candidates, Paradigm.PAIRWISE_HEAPSORT)
    if trivial:
        return trivial
    check_candidates(candidates)
    n = len(candidates)
    k = n if k is None else k
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    k = min(k, n)
    comparisons = 0

    def above(i: int, j: int) -> bool:
        nonlocal comparisons
        comparisons += 1
        a, b = candidates[i], candidates[j]
        try:
            outcome = _as_comparison(compare_fn(query, a.content, b.content))
        except Exception as e:
            annotate(e, f"while comparing doc_ids {a.doc_id} and {b.doc_id}")
            raise
        if outcome is Comparison.TIE:
            return a.initial_rank < b.initial_rank
        return outcome is Comparison.A_WINS

    heap = list(range(n))

    def sift_down(root: int, end: int) -> None:
        while True:
            child = 2 * root + 1
            if child >= end:
                return
            best = root
            if above(heap[child], heap[best]):
                best = child
            if child + 1 < end and above(heap[child + 1], heap[best]):
                best = child + 1
            if best == root:
                return
            heap[root], heap[best] = heap[best], heap[root]
            root = best

    for start in range(n // 2 - 1, -1, -1):
        sift_down(start, n)
    top = []
    end = n
    for extracted in range(k):
        top.append(heap[0])
        end -= 1
        heap[0] = heap[end]
        if extracted < k - 1:
            sift_down(0, end)

    chosen = set(top)
    rest = sorted((i for i in range(n) if i not in chosen), key=lambda i: candidates[i].initial_rank)
    return Ranking(top + rest, Paradigm.PAIRWISE_HEAPSORT.value, stats={"comparisons": comparisons, "k": k})


def window_starts(n: int, window_size: int, step: int) -> list[int]:
    """Back-to-front window start positions for one sliding-window pass."""
    if n <= window_size:
        return [0]
    starts = []
    start = n - window_size
    while True:
        starts.append(start)
        if start == 0:
            return starts
        start = max(start - step, 0)


def listwise_sliding_window(
    query: str,
    candidates: Sequence[Candidate],
    window_fn: Callable[[str, list[str]], Sequence[int]],
    cfg: SlidingWindowConfig = SlidingWindowConfig(),
) -> Ranking:
    trivial = _trivial(candidates, Paradigm.LISTWISE_SLIDING_WINDOW)
    if trivial:
        return trivial
    check_candidates(candidates)
    order = list(range(len(candidates)))
    starts = window_starts(len(candidates), cfg.window_size, cfg.step)
    for start in starts:
        idx = order[start : start + cfg.window_size]
        try:
            perm = list(window_fn(query, [candidates[i].content for i in idx]))
            if sorted(perm) != list(range(len(idx))):
                raise ValueError(f"window_fn returned {perm}, not a permutation of {len(idx)} items")
        except Exception as e:
            annotate(e, f"in window starting at position {start}")
            raise
        order[start : start + cfg.window_size] = [idx[p] for p in perm]
    return Ranking(
        order,
        Paradigm.LISTWISE_SLIDING_WINDOW.value,
        stats={"model_calls": len(starts), "window_starts": starts},
    )


def repair_selection(picked: Iterable[Any], size: int, m: int, strict: bool = False) -> list[int]:
    """Clean a selection of ``m`` indices out of ``range(size)``.

    Out-of-range and duplicate entries are dropped, extras truncated, and any
    shortfall filled with the lowest unchosen indices (the group is passed in
    standing order, so these are the best-standing members). With
    ``strict=True`` any defect raises :class:`SelectionSizeError` instead.
    """
    try:
        picked = list(picked)
    except TypeError:
        raise SelectionSizeError(f"selection is not a sequence: {picked!r}") from None
    valid: list[int] = []
    for j in picked:
        if isinstance(j, int) and not isinstance(j, bool) and 0 <= j < size and j not in valid:
            valid.append(j)
    if strict and (len(valid) != len(picked) or len(valid) != m):
        raise SelectionSizeError(f"expected {m} distinct indices in [0, {size}), got {picked}")
    valid = valid[:m]
    for j in range(size):
        if len(valid) == m:
            break
        if j not in valid:
            valid.append(j)
    return valid


def tournament_rerank(
    query: str,
    candidates: Sequence[Candidate],
    select_fn: Callable[[str, list[str], int], Sequence[int]],
    cfg: TournamentConfig = TournamentConfig(),
    max_workers: int = 1,
    strict: bool = False,
) -> Ranking:
    """Rank by points earned surviving successive selection stages.

    Each stage splits the survivors round-robin by standing into groups of at
    most ``cfg.group_size``; ``select_fn`` keeps a quota from each group so the
    quotas add up to the next stage size. Every member of a stage earns one
    point, per round.
    """
    trivial = _trivial(candidates, Paradigm.TOURNAMENT)
    if trivial:
        return trivial
    check_candidates(candidates)
    n = len(candidates)
    sizes = cfg.resolve(n)
    points = [0] * n
    calls = 0

    def standing(pool: Iterable[int]) -> list[int]:
        return sorted(pool, key=lambda i: (-points[i], candidates[i].initial_rank))

    def select(task: tuple[list[int], int]) -> list[int]:
        group, m = task
        if m >= len(group):
            return list(group)
        try:
            picked = select_fn(query, [candidates[i].content for i in group], m)
            local = repair_selection(picked, len(group), m, strict)
        except Exception as e:
            annotate(e, "while selecting {} of doc_ids {}".format(m, [candidates[i].doc_id for i in group]))
            raise
        return [group[j] for j in local]

    for _ in range(cfg.rounds):
        survivors = standing(range(n))[: sizes[0]]
        for i in survivors:
            points[i] += 1
        for target in sizes[1:]:
            n_groups = max(1, min(math.ceil(len(survivors) / cfg.group_size), target))
            tasks = [
                (survivors[g::n_groups], target // n_groups + (1 if g < target % n_groups else 0))
                for g in range(n_groups)
            ]
            calls += sum(1 for group, m in tasks if m < len(group))
            chosen = [i for part in _parallel_map(select, tasks, max_workers) for i in part]
            for i in chosen:
                points[i] += 1
            survivors = standing(chosen)

    order = standing(range(n))
    return Ranking(
        order,
        Paradigm.TOURNAMENT.value,
        stats={"model_calls": calls, "points": [points[i] for i in order], "stage_sizes": sizes},
    )
