import json
import random

import pytest

from llm_rerank.ranking import Candidate


def synthetic_dataset(root, n_queries=5, n_docs=100, seed=0, presorted=False, graded_top=10):
    """Write candidates.jsonl, qrels.txt and scores.json under ``root``.

    Hidden scores are distinct. Qrels give the oracle top ``graded_top`` docs
    distinct grades (graded_top .. 1), so nDCG@10 = 1 only for the exact
    oracle top-10 order.
    """
    rng = random.Random(seed)
    root.mkdir(parents=True, exist_ok=True)
    scores = {}
    cand_lines, qrel_lines = [], []
    for q in range(n_queries):
        qid = f"q{q}"
        values = rng.sample(range(1, 100_000), n_docs)
        table = {f"{qid}-d{i}": v / 1000.0 for i, v in enumerate(values)}
        scores[qid] = table
        ids = list(table)
        if presorted:
            ids.sort(key=lambda d: -table[d])
        else:
            rng.shuffle(ids)
        cands = [
            {"doc_id": d, "content": f"passage {d} about topic {rng.randint(0, 9)}", "score": float(n_docs - i)}
            for i, d in enumerate(ids)
        ]
        cand_lines.append(json.dumps({"query_id": qid, "query_text": f"question number {q}", "candidates": cands}))
        ranked = sorted(table, key=lambda d: -table[d])
        for pos, d in enumerate(ranked):
            grade = graded_top - pos if pos < graded_top else 0
            qrel_lines.append(f"{qid} 0 {d} {grade}")
    (root / "candidates.jsonl").write_text("\n".join(cand_lines) + "\n")
    (root / "qrels.txt").write_text("\n".join(qrel_lines) + "\n")
    (root / "scores.json").write_text(json.dumps(scores))
    return scores


@pytest.fixture
def make_dataset(tmp_path):
    def build(name="synth", **kwargs):
        root = tmp_path / name
        scores = synthetic_dataset(root, **kwargs)
        return root, scores

    return build


def candidates_from_scores(scores, order=None):
    ids = list(scores) if order is None else order
    return [Candidate(d, f"text {d}", i + 1) for i, d in enumerate(ids)]


# -- acceptance reporting -----------------------------------------------------

_CRITERIA: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    marker = dict(report.user_properties).get("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        detail = ""
        if report.outcome == "skipped" and isinstance(report.longrepr, tuple):
            detail = report.longrepr[2]
        _CRITERIA[report.nodeid] = (f"[{status}] {marker}", detail)


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            item.user_properties.append(("criterion", mark.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for line, detail in _CRITERIA.values():
        terminalreporter.write_line(f"{line}{' - ' + detail if detail else ''}")
